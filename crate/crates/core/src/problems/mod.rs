//! Test problems with known nonnegative solutions, and their on-disk form.
//!
//! A saved problem is a directory holding `problem.json` (name, shape,
//! operator kind, noise), the operator (`operator.txt` as `rows cols nnz`
//! triplets, or `psf.bin` plus the PSF shape in `problem.json`), and the
//! vectors `x_exact.bin`, `b_exact.bin`, `b.bin`. Vector files start with a
//! text line `len=<N>` followed by `N` little-endian `f64` values.

mod images;
mod tomo;

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use images::{
    boxcar_spikes, make_deblur_1d, make_satellite_like, make_starfield, make_starfield_from,
    random_stars, satellite_image, Star,
};
pub use tomo::{
    angle_range, default_rays, make_paralleltomo, paralleltomo_matrix, ray_offsets, shepp_logan,
    trace_ray,
};

use crate::error::{Error, Result};
use crate::linop::{
    Conv2dPsf, CsrMatrix, DenseMatrix, DiagonalOperator, LinearMap, LinearOperator,
};
use crate::noise::{corrupt, NoiseSpec};
use crate::vector::norm2;

#[derive(Debug, Clone)]
pub struct ProblemInstance {
    pub name: String,
    pub op: LinearOperator,
    /// Image shape `(rows, cols)` of the unknown.
    pub shape: (usize, usize),
    pub x_exact: Vec<f64>,
    pub b_exact: Vec<f64>,
    pub b: Vec<f64>,
    pub noise: NoiseSpec,
    pub eta_norm: f64,
    /// Realized noise level `eta_norm / ‖b_exact‖`.
    pub noise_level: f64,
}

impl ProblemInstance {
    /// Forms `b_exact = A x_exact` and draws the noisy data.
    pub fn from_truth(
        name: &str,
        op: LinearOperator,
        shape: (usize, usize),
        x_exact: Vec<f64>,
        noise: &NoiseSpec,
    ) -> Result<Self> {
        if x_exact.iter().any(|&v| !(v >= 0.0)) {
            return Err(Error::InvariantViolation(
                "exact solution must be nonnegative".into(),
            ));
        }
        let b_exact = op.apply(&x_exact)?;
        let data = corrupt(&b_exact, noise)?;
        Ok(ProblemInstance {
            name: name.to_string(),
            op,
            shape,
            x_exact,
            b_exact,
            b: data.b,
            noise: *noise,
            eta_norm: data.eta_norm,
            noise_level: data.level,
        })
    }

    /// Same operator and solution with a fresh noise draw.
    pub fn with_noise(&self, noise: &NoiseSpec) -> Result<Self> {
        let data = corrupt(&self.b_exact, noise)?;
        Ok(ProblemInstance {
            b: data.b,
            noise: *noise,
            eta_norm: data.eta_norm,
            noise_level: data.level,
            ..self.clone()
        })
    }

    /// `‖A x_exact - b_exact‖ / ‖b_exact‖`.
    pub fn consistency_error(&self) -> Result<f64> {
        let ax = self.op.apply(&self.x_exact)?;
        let diff: Vec<f64> = ax.iter().zip(&self.b_exact).map(|(a, b)| a - b).collect();
        Ok(norm2(&diff) / norm2(&self.b_exact).max(f64::MIN_POSITIVE))
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let operator = match &self.op {
            LinearOperator::Sparse(a) => {
                a.save_triplets(&dir.join("operator.txt"))?;
                OperatorMeta::Sparse
            }
            LinearOperator::Dense(a) => {
                let t: Vec<(usize, usize, f64)> = (0..a.rows())
                    .flat_map(|i| a.row(i).iter().enumerate().map(move |(j, &v)| (i, j, v)))
                    .collect();
                CsrMatrix::from_triplets(a.rows(), a.cols(), &t)?
                    .save_triplets(&dir.join("operator.txt"))?;
                OperatorMeta::Dense
            }
            LinearOperator::Conv2d(c) => {
                if c.psf().is_empty() {
                    return Err(Error::UnsupportedOperator(
                        "convolution given only by its transfer function cannot be saved".into(),
                    ));
                }
                write_f64_file(&dir.join("psf.bin"), c.psf())?;
                let (image_rows, image_cols) = c.image_shape();
                let (psf_rows, psf_cols) = c.psf_shape();
                OperatorMeta::Conv2d {
                    image_rows,
                    image_cols,
                    psf_rows,
                    psf_cols,
                }
            }
            LinearOperator::Diagonal(d) => {
                write_f64_file(&dir.join("diag.bin"), d.diag())?;
                OperatorMeta::Diagonal
            }
            LinearOperator::Weighted { .. } => {
                return Err(Error::UnsupportedOperator(
                    "composed operators cannot be saved".into(),
                ))
            }
        };
        let meta = ProblemMeta {
            name: self.name.clone(),
            shape: self.shape,
            operator,
            noise: self.noise,
            eta_norm: self.eta_norm,
            noise_level: self.noise_level,
        };
        let path = dir.join("problem.json");
        let text = serde_json::to_string_pretty(&meta).expect("problem metadata serializes");
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        write_f64_file(&dir.join("x_exact.bin"), &self.x_exact)?;
        write_f64_file(&dir.join("b_exact.bin"), &self.b_exact)?;
        write_f64_file(&dir.join("b.bin"), &self.b)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join("problem.json");
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let meta: ProblemMeta = serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.clone(),
            message: e.to_string(),
        })?;
        let op = match meta.operator {
            OperatorMeta::Sparse => {
                LinearOperator::Sparse(CsrMatrix::load_triplets(&dir.join("operator.txt"))?)
            }
            OperatorMeta::Dense => {
                let s = CsrMatrix::load_triplets(&dir.join("operator.txt"))?;
                let mut data = vec![0.0; s.rows() * s.cols()];
                for (i, j, v) in s.triplets() {
                    data[i * s.cols() + j] = v;
                }
                LinearOperator::Dense(DenseMatrix::new(s.rows(), s.cols(), data)?)
            }
            OperatorMeta::Conv2d {
                image_rows,
                image_cols,
                psf_rows,
                psf_cols,
            } => {
                let psf = read_f64_file(&dir.join("psf.bin"))?;
                LinearOperator::Conv2d(Conv2dPsf::new(
                    image_rows, image_cols, psf_rows, psf_cols, psf,
                )?)
            }
            OperatorMeta::Diagonal => LinearOperator::Diagonal(DiagonalOperator::new(
                read_f64_file(&dir.join("diag.bin"))?,
            )?),
        };
        Ok(ProblemInstance {
            name: meta.name,
            op,
            shape: meta.shape,
            x_exact: read_f64_file(&dir.join("x_exact.bin"))?,
            b_exact: read_f64_file(&dir.join("b_exact.bin"))?,
            b: read_f64_file(&dir.join("b.bin"))?,
            noise: meta.noise,
            eta_norm: meta.eta_norm,
            noise_level: meta.noise_level,
        })
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
enum OperatorMeta {
    Sparse,
    Dense,
    Conv2d {
        image_rows: usize,
        image_cols: usize,
        psf_rows: usize,
        psf_cols: usize,
    },
    Diagonal,
}

#[derive(Debug, Serialize, Deserialize)]
struct ProblemMeta {
    name: String,
    shape: (usize, usize),
    operator: OperatorMeta,
    noise: NoiseSpec,
    eta_norm: f64,
    noise_level: f64,
}

/// Writes `len=<N>\n` followed by `N` little-endian `f64` values.
pub fn write_f64_file(path: &Path, v: &[f64]) -> Result<()> {
    let mut bytes = format!("len={}\n", v.len()).into_bytes();
    bytes.reserve(8 * v.len());
    for x in v {
        bytes.extend_from_slice(&x.to_le_bytes());
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(path, e))
}

pub fn read_f64_file(path: &Path) -> Result<Vec<f64>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let parse_err = |message: String| Error::Parse {
        path: path.to_owned(),
        message,
    };
    let nl = bytes
        .iter()
        .position(|&c| c == b'\n')
        .ok_or_else(|| parse_err("missing header line".into()))?;
    let header = std::str::from_utf8(&bytes[..nl]).map_err(|e| parse_err(e.to_string()))?;
    let len: usize = header
        .strip_prefix("len=")
        .and_then(|s| s.trim().parse().ok())
        .ok_or_else(|| parse_err(format!("bad header {header:?}")))?;
    let body = &bytes[nl + 1..];
    if body.len() != 8 * len {
        return Err(parse_err(format!(
            "expected {} bytes of data, found {}",
            8 * len,
            body.len()
        )));
    }
    Ok(body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vector_file_format() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("v.bin");
        write_f64_file(&p, &[1.5, -2.0]).unwrap();
        let raw = fs::read(&p).unwrap();
        assert!(raw.starts_with(b"len=2\n"));
        assert_eq!(raw.len(), 6 + 16);
        assert_eq!(read_f64_file(&p).unwrap(), vec![1.5, -2.0]);
        fs::write(&p, b"len=3\n\0\0\0\0\0\0\0\0").unwrap();
        assert!(matches!(read_f64_file(&p), Err(Error::Parse { .. })));
    }

    #[test]
    fn problems_are_consistent() {
        let tomo = make_paralleltomo(
            12,
            &angle_range(0.0, 15.0, 165.0),
            17,
            &NoiseSpec::default(),
        )
        .unwrap();
        let sat = make_satellite_like(16, 1.2, 10.0, &NoiseSpec::default()).unwrap();
        for p in [tomo, sat] {
            assert!(p.consistency_error().unwrap() < 1e-12);
            assert!(p.x_exact.iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn save_and_load() {
        let dir = tempfile::tempdir().unwrap();
        let noise = NoiseSpec::gaussian_level(0.05, 9);
        for (k, p) in [
            make_paralleltomo(8, &[0.0, 45.0, 90.0], 11, &noise).unwrap(),
            make_starfield(16, 5, 0.5, 1.0, &noise, 2).unwrap(),
        ]
        .into_iter()
        .enumerate()
        {
            let sub = dir.path().join(k.to_string());
            p.save(&sub).unwrap();
            let q = ProblemInstance::load(&sub).unwrap();
            assert_eq!(q.b, p.b);
            assert_eq!(q.x_exact, p.x_exact);
            assert_eq!(
                q.op.apply(&p.x_exact).unwrap(),
                p.op.apply(&p.x_exact).unwrap()
            );
        }
    }
}
