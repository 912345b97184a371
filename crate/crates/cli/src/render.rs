//! CSV tables and P6 rasters (one image per chart).

use std::fmt::Write as _;

use corrdyn::branches::NormalityFlag;
use corrdyn::measure::SphereHistogram;
use corrdyn::sphere::CellId;
use corrdyn::{AtlasGrid, Chart, ProjPoint};

pub const NORMAL_RGB: [u8; 3] = [46, 139, 87];
pub const NONNORMAL_RGB: [u8; 3] = [200, 40, 40];
pub const INCONCLUSIVE_RGB: [u8; 3] = [230, 200, 60];

pub fn flag_rgb(f: NormalityFlag) -> [u8; 3] {
    match f {
        NormalityFlag::Normal => NORMAL_RGB,
        NormalityFlag::NonNormal => NONNORMAL_RGB,
        NormalityFlag::Inconclusive => INCONCLUSIVE_RGB,
    }
}

pub fn histogram_csv(h: &SphereHistogram) -> String {
    let g = h.grid();
    let mut s = String::from("chart,i,j,mass\n");
    for (k, m) in h.mass().iter().enumerate() {
        let c = g.cell(k);
        writeln!(s, "{},{},{},{}", c.chart.index(), c.i, c.j, m).unwrap();
    }
    s
}

pub fn normality_csv(rows: &[(ProjPoint, f64, NormalityFlag)]) -> String {
    let mut s = String::from("re_a,im_a,re_b,im_b,score,flag\n");
    for (p, score, flag) in rows {
        let [a, b, c, d] = p.to_array();
        writeln!(s, "{a},{b},{c},{d},{score},{}", flag.as_str()).unwrap();
    }
    s
}

/// Binary PPM of one chart; `color` maps a cell index to a pixel. Row 0 of
/// the image is the top (largest j).
pub fn chart_ppm(grid: &AtlasGrid, chart: Chart, color: impl Fn(usize) -> [u8; 3]) -> Vec<u8> {
    let n = grid.resolution();
    let mut out = format!("P6\n{n} {n}\n255\n").into_bytes();
    for row in 0..n {
        let j = n - 1 - row;
        for i in 0..n {
            out.extend_from_slice(&color(grid.index(CellId { chart, i, j })));
        }
    }
    out
}

/// Black, red, yellow, white as `t` goes from 0 to 1.
pub fn heat(t: f64) -> [u8; 3] {
    let t = t.clamp(0.0, 1.0) * 3.0;
    let ch = |x: f64| (x.clamp(0.0, 1.0) * 255.0).round() as u8;
    [ch(t), ch(t - 1.0), ch(t - 2.0)]
}

/// Log-scaled mass colors; empty cells are black.
pub fn mass_colors(h: &SphereHistogram) -> Vec<[u8; 3]> {
    let positive = h.mass().iter().filter(|&&m| m > 0.0);
    let lo = positive.clone().fold(f64::INFINITY, |a, &b| a.min(b));
    let hi = positive.fold(0.0f64, |a, &b| a.max(b));
    let (llo, lhi) = (lo.ln(), hi.ln());
    h.mass()
        .iter()
        .map(|&m| {
            if m <= 0.0 {
                [0, 0, 0]
            } else if lhi - llo < 1e-12 {
                heat(1.0)
            } else {
                heat(0.15 + 0.85 * (m.ln() - llo) / (lhi - llo))
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ppm_layout() {
        let g = AtlasGrid::new(4);
        let img = chart_ppm(&g, Chart::One, |_| [1, 2, 3]);
        let header = b"P6\n4 4\n255\n";
        assert_eq!(&img[..header.len()], header);
        assert_eq!(img.len(), header.len() + 4 * 4 * 3);
    }

    #[test]
    fn heat_ramp_ends() {
        assert_eq!(heat(0.0), [0, 0, 0]);
        assert_eq!(heat(1.0), [255, 255, 255]);
        assert_eq!(heat(1.0 / 3.0), [255, 0, 0]);
    }

    #[test]
    fn csv_rows() {
        let g = AtlasGrid::new(2);
        let h = SphereHistogram::dirac(&g, &ProjPoint::ZERO);
        let csv = histogram_csv(&h);
        assert_eq!(csv.lines().count(), 1 + g.num_cells());
        assert!(csv.lines().any(|l| l.ends_with(",1")));
    }
}
