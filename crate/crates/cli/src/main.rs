fn main() {
    std::process::exit(corrdyn_cli::run(std::env::args_os()));
}
