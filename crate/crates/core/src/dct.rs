//! Block DCT bases, fractional-sampling inverse transforms and quantization priors.
//!
//! Spatial samples of an `N x N` block are vectorized row-major as `r * N + c`,
//! coefficients as `u * N + v`, with `u` the vertical frequency.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const BLOCK: usize = 8;
pub const QP_MAX: i32 = 51;

/// Dense row-major matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn transpose(&self) -> Matrix {
        let mut data = vec![0.0; self.data.len()];
        for r in 0..self.rows {
            for c in 0..self.cols {
                data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        Matrix { rows: self.cols, cols: self.rows, data }
    }

    /// `self * v` for a column vector `v`.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.cols);
        self.data.chunks_exact(self.cols).map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum()).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        for row in self.data.chunks_exact(self.cols) {
            let line: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
            writeln!(s, "{}", line.join(",")).unwrap();
        }
        s
    }

    pub fn from_csv(text: &str, origin: &Path) -> Result<Matrix> {
        let mut data = Vec::new();
        let mut rows = 0;
        let mut cols = None;
        for (lineno, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let row = line
                .split(',')
                .map(|f| f.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::format(origin, format!("line {}: {e}", lineno + 1)))?;
            if *cols.get_or_insert(row.len()) != row.len() {
                return Err(Error::format(origin, format!("line {}: ragged row", lineno + 1)));
            }
            data.extend(row);
            rows += 1;
        }
        Ok(Matrix { rows, cols: cols.unwrap_or(0), data })
    }
}

fn alpha(u: usize, n: usize) -> f64 {
    if u == 0 {
        (1.0 / n as f64).sqrt()
    } else {
        (2.0 / n as f64).sqrt()
    }
}

/// 1-D DCT-II kernel evaluated at a continuous spatial coordinate.
fn kernel(x: f64, u: usize, n: usize) -> f64 {
    alpha(u, n) * ((2.0 * x + 1.0) * u as f64 * std::f64::consts::PI / (2.0 * n as f64)).cos()
}

/// Orthonormal 2-D DCT of an `N x N` block.
#[derive(Clone, Debug, PartialEq)]
pub struct DctBasis {
    pub block_size: usize,
    /// `(N², N²)`, coefficients = forward * spatial.
    pub forward: Matrix,
}

impl DctBasis {
    pub fn inverse(&self) -> Matrix {
        self.forward.transpose()
    }
}

pub fn make_dct_basis(block_size: usize) -> Result<DctBasis> {
    if block_size == 0 {
        return Err(Error::Domain("DCT block size must be at least 1".into()));
    }
    let n = block_size;
    let nn = n * n;
    let mut data = vec![0.0; nn * nn];
    for u in 0..n {
        for v in 0..n {
            for r in 0..n {
                for c in 0..n {
                    data[(u * n + v) * nn + r * n + c] = kernel(r as f64, u, n) * kernel(c as f64, v, n);
                }
            }
        }
    }
    Ok(DctBasis { block_size: n, forward: Matrix { rows: nn, cols: nn, data } })
}

/// Inverse DCT sampled on a grid `factor` times finer than the block.
#[derive(Clone, Debug, PartialEq)]
pub struct FractionalIdct {
    pub block_size: usize,
    pub factor: usize,
    /// `((factor·N)², N²)`; row `r_f * factor·N + c_f`.
    pub matrix: Matrix,
}

/// Continuous coordinate of fine sample `xf`: `xf = 2x + i` sits at `x - 0.25`
/// for `i = 0` and `x + 0.25` for `i = 1`.
pub fn fine_coordinate(xf: usize, factor: usize) -> f64 {
    match factor {
        1 => xf as f64,
        _ => xf as f64 / 2.0 - 0.25,
    }
}

pub fn make_fractional_idct(block_size: usize, factor: usize) -> Result<FractionalIdct> {
    if factor != 1 && factor != 2 {
        return Err(Error::Config(format!("IDCT sampling factor must be 1 or 2, got {factor}")));
    }
    let basis = make_dct_basis(block_size)?;
    if factor == 1 {
        return Ok(FractionalIdct { block_size, factor, matrix: basis.inverse() });
    }
    let n = block_size;
    let m = factor * n;
    let mut data = vec![0.0; m * m * n * n];
    for rf in 0..m {
        let x = fine_coordinate(rf, factor);
        for cf in 0..m {
            let y = fine_coordinate(cf, factor);
            let row = &mut data[(rf * m + cf) * n * n..][..n * n];
            for u in 0..n {
                let ku = kernel(x, u, n);
                for v in 0..n {
                    row[u * n + v] = ku * kernel(y, v, n);
                }
            }
        }
    }
    Ok(FractionalIdct { block_size, factor, matrix: Matrix { rows: m * m, cols: n * n, data } })
}

/// Shared 8x8 basis.
pub fn dct8() -> &'static DctBasis {
    static CELL: OnceLock<DctBasis> = OnceLock::new();
    CELL.get_or_init(|| make_dct_basis(BLOCK).unwrap())
}

/// Shared 8x8 fractional inverse for factor 1 or 2.
pub fn idct8(factor: usize) -> Result<&'static FractionalIdct> {
    static ONE: OnceLock<FractionalIdct> = OnceLock::new();
    static TWO: OnceLock<FractionalIdct> = OnceLock::new();
    match factor {
        1 => Ok(ONE.get_or_init(|| make_fractional_idct(BLOCK, 1).unwrap())),
        2 => Ok(TWO.get_or_init(|| make_fractional_idct(BLOCK, 2).unwrap())),
        f => Err(Error::Config(format!("IDCT sampling factor must be 1 or 2, got {f}"))),
    }
}

/// HEVC step size growth: doubles every 6 QP, unity at QP 4.
pub fn qp_step(qp: i32) -> Result<f64> {
    check_qp(qp)?;
    Ok(2f64.powf((qp - 4) as f64 / 6.0))
}

fn check_qp(qp: i32) -> Result<()> {
    if (0..=QP_MAX).contains(&qp) {
        Ok(())
    } else {
        Err(Error::Domain(format!("qp must lie in [0, {QP_MAX}], got {qp}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelKind {
    Luma,
    Chroma,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TableSource {
    /// Every entry 16.
    Flat,
    /// Plain text file with 8 rows of 8 positive numbers.
    File(PathBuf),
}

#[derive(Clone, Debug, PartialEq)]
pub struct QuantPrior {
    pub t_base: [f64; 64],
    /// 16x16, each base entry duplicated over a 2x2 cell.
    pub t_up: [f64; 256],
    pub qp: i32,
    pub kind: ChannelKind,
}

pub fn make_quant_prior(qp: i32, kind: ChannelKind, source: &TableSource) -> Result<QuantPrior> {
    check_qp(qp)?;
    let t_base = match source {
        TableSource::Flat => [16.0; 64],
        TableSource::File(p) => read_table(p)?,
    };
    Ok(QuantPrior { t_up: upsample_table(&t_base), t_base, qp, kind })
}

pub fn upsample_table(t: &[f64; 64]) -> [f64; 256] {
    let mut up = [0.0; 256];
    for (i, v) in up.iter_mut().enumerate() {
        *v = t[(i / 16 / 2) * 8 + (i % 16) / 2];
    }
    up
}

pub fn parse_table(text: &str, origin: &Path) -> Result<[f64; 64]> {
    let values = text
        .split_whitespace()
        .map(|t| t.parse::<f64>().map_err(|e| Error::format(origin, format!("bad table entry {t:?}: {e}"))))
        .collect::<Result<Vec<_>>>()?;
    if values.len() != 64 {
        return Err(Error::format(
            origin,
            format!("quantization table needs exactly 64 numbers, found {}", values.len()),
        ));
    }
    if let Some(bad) = values.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
        return Err(Error::format(origin, format!("table entries must be positive, found {bad}")));
    }
    Ok(values.try_into().unwrap())
}

pub fn read_table(path: &Path) -> Result<[f64; 64]> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_table(&text, path)
}

pub fn format_table(t: &[f64; 64]) -> String {
    let mut s = String::new();
    for row in t.chunks_exact(8) {
        let line: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        writeln!(s, "{}", line.join(" ")).unwrap();
    }
    s
}

pub fn write_table(path: &Path, t: &[f64; 64]) -> Result<()> {
    fs::write(path, format_table(t)).map_err(|e| Error::io(path, e))
}

/// Forward 8x8 DCT of one block given as 64 row-major samples.
pub fn forward8(block: &[f64]) -> Vec<f64> {
    dct8().forward.apply(block)
}

/// Inverse 8x8 DCT of 64 coefficients.
pub fn inverse8(coef: &[f64]) -> Vec<f64> {
    idct8(1).unwrap().matrix.apply(coef)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_block() {
        assert_eq!(make_dct_basis(1).unwrap().forward.data, vec![1.0]);
        assert!(matches!(make_dct_basis(0), Err(Error::Domain(_))));
    }

    #[test]
    fn fine_coordinates_straddle_integer_samples() {
        let xs: Vec<f64> = (0..4).map(|i| fine_coordinate(i, 2)).collect();
        assert_eq!(xs, vec![-0.25, 0.25, 0.75, 1.25]);
    }

    #[test]
    fn upsampled_table_layout() {
        let mut t = [1.0; 64];
        t[3 * 8 + 5] = 42.0;
        let up = upsample_table(&t);
        for (r, c) in [(6, 10), (7, 10), (6, 11), (7, 11)] {
            assert_eq!(up[r * 16 + c], 42.0);
        }
        assert_eq!(up.iter().filter(|&&v| v == 42.0).count(), 4);
    }

    #[test]
    fn table_parse_errors() {
        let p = Path::new("t.txt");
        assert!(parse_table(&"1 ".repeat(63), p).is_err());
        let mut s = "1 ".repeat(63);
        s.push_str("0");
        assert!(parse_table(&s, p).unwrap_err().to_string().contains("positive"));
        assert!(parse_table("x", p).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let m = make_fractional_idct(2, 2).unwrap().matrix;
        let back = Matrix::from_csv(&m.to_csv(), Path::new("m.csv")).unwrap();
        assert_eq!(back, m);
    }
}
