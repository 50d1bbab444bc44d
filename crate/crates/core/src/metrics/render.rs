use std::fmt::Write as _;
use std::path::Path;

use super::{ConfusionMatrix, MetricReport};
use crate::error::{Error, Result};

/// Side length in pixels of one heatmap cell.
pub const CELL_PX: usize = 32;

const CORNER: &str = "gold\\pred";

/// Three decimals, half away from zero for nonnegative inputs. The small
/// nudge keeps values printed as exact halves (e.g. 0.2045) from slipping
/// down through binary representation error.
pub fn round3(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    let sign = if x < 0.0 { "-" } else { "" };
    let n = (x.abs() * 1000.0 + 0.5 + 1e-9).floor() as u64;
    format!("{sign}{}.{:03}", n / 1000, n % 1000)
}

pub fn render_text(cm: &ConfusionMatrix, report: &MetricReport) -> String {
    let names = cm.labels().names();
    let head = names.iter().map(String::len).chain([CORNER.len()]).max().unwrap_or(0);
    let cell = names
        .iter()
        .map(String::len)
        .chain(cm.counts().iter().flatten().map(|c| c.to_string().len()))
        .max()
        .unwrap_or(1);

    let mut out = String::new();
    let _ = write!(out, "{CORNER:<head$}");
    for name in names {
        let _ = write!(out, "  {name:>cell$}");
    }
    out.push('\n');
    for (name, row) in names.iter().zip(cm.counts()) {
        let _ = write!(out, "{name:<head$}");
        for c in row {
            let _ = write!(out, "  {c:>cell$}");
        }
        out.push('\n');
    }

    out.push('\n');
    let _ = writeln!(out, "{:<head$}  {:>9}  {:>9}  {:>9}  {:>9}", "label", "precision", "recall", "f1", "support");
    for (name, s) in names.iter().zip(&report.per_class) {
        let _ = writeln!(
            out,
            "{name:<head$}  {:>9}  {:>9}  {:>9}  {:>9}",
            round3(s.precision),
            round3(s.recall),
            round3(s.f1),
            s.support
        );
    }
    out.push('\n');
    out.push_str(&footer(report));
    out.push('\n');
    out
}

/// `accuracy=… f1_micro=… f1_macro=… f1_weighted=…`
pub(crate) fn footer(report: &MetricReport) -> String {
    format!(
        "accuracy={} f1_micro={} f1_macro={} f1_weighted={}",
        round3(report.accuracy),
        round3(report.f1_micro),
        round3(report.f1_macro),
        round3(report.f1_weighted)
    )
}

impl MetricReport {
    pub fn summary_line(&self) -> String {
        footer(self)
    }
}

fn intensity(count: u64, row_max: u64) -> u64 {
    if row_max == 0 {
        0
    } else {
        (255.0 * count as f64 / row_max as f64).round() as u64
    }
}

/// Plain PGM (P2) text for the row-normalized heatmap.
pub fn heatmap_pgm(cm: &ConfusionMatrix) -> String {
    let l = cm.len();
    let side = l * CELL_PX;
    let mut out = format!("P2\n{side} {side}\n255\n");
    for row in cm.counts() {
        let row_max = row.iter().copied().max().unwrap_or(0);
        let values: Vec<String> = row.iter().map(|&c| intensity(c, row_max).to_string()).collect();
        let mut block = String::new();
        let mut line = String::new();
        for v in &values {
            for _ in 0..CELL_PX {
                // Plain PGM readers may reject lines longer than 70 characters.
                if line.len() + v.len() + 1 > 70 {
                    block.push_str(&line);
                    block.push('\n');
                    line.clear();
                }
                if !line.is_empty() {
                    line.push(' ');
                }
                line.push_str(v);
            }
        }
        block.push_str(&line);
        block.push('\n');
        for _ in 0..CELL_PX {
            out.push_str(&block);
        }
    }
    out
}

pub fn render_heatmap(cm: &ConfusionMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, heatmap_pgm(cm)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::LabelSet;

    fn cm(names: &[&str], counts: Vec<Vec<u64>>) -> ConfusionMatrix {
        ConfusionMatrix::from_counts(LabelSet::new(names.iter().copied()).unwrap(), counts).unwrap()
    }

    fn parse_pgm(text: &str) -> (usize, usize, Vec<u64>) {
        let mut tok = text.split_whitespace();
        assert_eq!(tok.next(), Some("P2"));
        let w: usize = tok.next().unwrap().parse().unwrap();
        let h: usize = tok.next().unwrap().parse().unwrap();
        assert_eq!(tok.next(), Some("255"));
        let px: Vec<u64> = tok.map(|t| t.parse().unwrap()).collect();
        assert_eq!(px.len(), w * h);
        assert!(px.iter().all(|&p| p <= 255));
        (w, h, px)
    }

    #[test]
    fn rounding_half_up() {
        assert_eq!(round3(0.2460), "0.246");
        assert_eq!(round3(0.2045), "0.205");
        assert_eq!(round3(0.20457), "0.205");
        assert_eq!(round3(1.0), "1.000");
        assert_eq!(round3(0.0), "0.000");
        assert_eq!(round3(0.9996), "1.000");
    }

    #[test]
    fn identity_table() {
        let m = cm(&["a", "b"], vec![vec![1, 0], vec![0, 1]]);
        let report = m.report().unwrap();
        let text = render_text(&m, &report);
        assert_eq!(text, render_text(&m, &report));
        let rows: Vec<&str> = text.lines().collect();
        assert_eq!(rows[1].split_whitespace().collect::<Vec<_>>(), ["a", "1", "0"]);
        assert_eq!(rows[2].split_whitespace().collect::<Vec<_>>(), ["b", "0", "1"]);
        assert!(text.contains("accuracy=1.000"));
        assert!(text.ends_with("f1_weighted=1.000\n"));
    }

    #[test]
    fn golden_layout() {
        let m = cm(&["egy", "msa"], vec![vec![12, 3], vec![105, 7]]);
        let text = render_text(&m, &m.report().unwrap());
        let expected = "\
gold\\pred  egy  msa
egy         12    3
msa        105    7

label      precision     recall         f1    support
egy            0.103      0.800      0.182         15
msa            0.700      0.063      0.115        112

accuracy=0.150 f1_micro=0.150 f1_macro=0.148 f1_weighted=0.123
";
        assert_eq!(text, expected);
    }

    #[test]
    fn heatmap_identity_and_uniform() {
        let (w, h, px) = parse_pgm(&heatmap_pgm(&cm(&["a", "b"], vec![vec![5, 0], vec![0, 2]])));
        assert_eq!((w, h), (64, 64));
        assert_eq!(px[0], 255);
        assert_eq!(px[40], 0);
        assert_eq!(px[40 * 64 + 40], 255);
        assert_eq!(px[40 * 64], 0);

        let (_, _, px) = parse_pgm(&heatmap_pgm(&cm(&["a", "b"], vec![vec![3, 3], vec![3, 3]])));
        assert!(px.iter().all(|&p| p == 255));

        let (_, _, px) = parse_pgm(&heatmap_pgm(&cm(&["a", "b"], vec![vec![0, 0], vec![1, 3]])));
        assert!(px[..64 * 32].iter().all(|&p| p == 0));
        assert_eq!(px[40 * 64], 85);
    }

    #[test]
    fn heatmap_lines_are_short() {
        let text = heatmap_pgm(&cm(&["a", "b", "c"], vec![vec![100, 50, 3]; 3]));
        assert!(text.lines().all(|l| l.len() <= 70));
        let (w, h, _) = parse_pgm(&text);
        assert_eq!((w, h), (96, 96));
    }

    #[test]
    fn heatmap_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cm.pgm");
        let m = cm(&["a"], vec![vec![4]]);
        render_heatmap(&m, &path).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), heatmap_pgm(&m));
        assert!(render_heatmap(&m, dir.path().join("missing/cm.pgm")).is_err());
    }
}
