//! Grayscale PGM rendering of matrices and vectors. Darker cells hold
//! higher values.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Heatmap {
    pub rows: usize,
    pub cols: usize,
    /// Row-major gray levels, 0 = black.
    pub pixels: Vec<u8>,
    /// Every value was equal; the image is uniformly mid-gray.
    pub constant: bool,
}

impl Heatmap {
    /// Binary P5 encoding.
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.cols, self.rows).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }
}

/// Min-max normalizes a row-major `rows x cols` grid: the maximum maps to 0
/// and the minimum to 255.
pub fn render_heatmap(values: &[f64], rows: usize, cols: usize) -> Result<Heatmap, CliError> {
    if rows == 0 || cols == 0 || values.len() != rows * cols {
        return Err(CliError::User(format!(
            "heatmap needs a non-empty {rows}x{cols} grid, got {} values",
            values.len()
        )));
    }
    if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
        return Err(CliError::User(format!(
            "heatmap value at row {}, column {} is not finite",
            pos / cols,
            pos % cols
        )));
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let constant = hi == lo;
    let pixels = values
        .iter()
        .map(|&v| if constant { 128 } else { (255.0 * (hi - v) / (hi - lo)).round() as u8 })
        .collect();
    Ok(Heatmap {
        rows,
        cols,
        pixels,
        constant,
    })
}

/// Renders `values` and writes `<stem>.pgm` plus the `<stem>.csv` grid.
pub fn write_heatmap(dir: &Path, stem: &str, values: &[f64], rows: usize, cols: usize) -> Result<Heatmap, CliError> {
    let map = render_heatmap(values, rows, cols)?;
    if map.constant {
        log::warn!("{stem}: all values are equal, writing a mid-gray image");
    }
    fs::create_dir_all(dir)?;
    fs::write(dir.join(format!("{stem}.pgm")), map.to_pgm())?;
    let mut csv = String::new();
    for row in values.chunks(cols) {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(csv, "{}", cells.join(",")).unwrap();
    }
    fs::write(dir.join(format!("{stem}.csv")), csv)?;
    Ok(map)
}

#[cfg(test)]
mod tests {
    use super::*;
    use imaplab::embed::{outer_product, FactorPermutation};

    #[test]
    fn anti_diagonal() {
        let map = render_heatmap(&[0.0, 1.0, 1.0, 0.0], 2, 2).unwrap();
        assert_eq!(map.pixels, vec![255, 0, 0, 255]);
        assert!(!map.constant);
        assert_eq!(&map.to_pgm()[..11], b"P5\n2 2\n255\n");
    }

    #[test]
    fn constant_grid_is_mid_gray() {
        let map = render_heatmap(&[0.3; 6], 2, 3).unwrap();
        assert!(map.constant);
        assert!(map.pixels.iter().all(|&p| p == 128));
    }

    #[test]
    fn rejects_bad_input() {
        assert!(render_heatmap(&[1.0, f64::NAN], 1, 2).is_err());
        assert!(render_heatmap(&[], 0, 0).is_err());
        assert!(render_heatmap(&[1.0, 2.0, 3.0], 2, 2).is_err());
    }

    #[test]
    fn vector_permutation_permutes_columns() {
        let v = [0.4, -1.0, 2.5, 0.0, 1.5];
        let perm = FactorPermutation::random(5, 3);
        let pv = perm.apply(&v);
        let a = render_heatmap(&v, 1, 5).unwrap();
        let b = render_heatmap(&pv, 1, 5).unwrap();
        assert_eq!(b.pixels, perm.apply(&a.pixels));
    }

    #[test]
    fn permuted_outer_product_is_a_double_permutation() {
        let p = [0.9, -0.2, 0.4, 1.3, -0.7, 0.1];
        let q = [0.3, 0.8, -1.1, 0.5, 0.2, -0.4];
        let perm = FactorPermutation::random(6, 11);
        let e = outer_product(&p, &q).unwrap();
        let ep = outer_product(&perm.apply(&p), &perm.apply(&q)).unwrap();
        let a = render_heatmap(e.cells(), 6, 6).unwrap();
        let b = render_heatmap(ep.cells(), 6, 6).unwrap();
        let s = perm.as_slice();
        for x in 0..6 {
            for y in 0..6 {
                assert_eq!(b.pixels[x * 6 + y], a.pixels[s[x] * 6 + s[y]]);
            }
        }
        assert_ne!(a.pixels, b.pixels);
    }
}
