//! Hand-crafted association baselines: constant-velocity Kalman motion, EMA
//! appearance and their fixed-weight blend.

use alloc::vec::Vec;

use crate::association::{AssociationError, CostMatrix};
use crate::domain::{BBox, Detection, APPEARANCE_CUE};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum HeuristicError {
    #[error("innovation covariance is singular")]
    SingularInnovation,
    #[error("empty history")]
    EmptyHistory,
}

type Mat8 = [[f64; 8]; 8];
type Mat4 = [[f64; 4]; 4];

/// Noise scales proportional to box size, SORT-style.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KalmanConfig {
    pub std_position: f64,
    pub std_velocity: f64,
}

impl Default for KalmanConfig {
    fn default() -> Self {
        Self {
            std_position: 1.0 / 20.0,
            std_velocity: 1.0 / 160.0,
        }
    }
}

/// State `(cx, cy, w, h, vcx, vcy, vw, vh)` with its covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct KalmanState {
    pub mean: [f64; 8],
    pub cov: Mat8,
    cfg: KalmanConfig,
}

fn measurement(b: &BBox) -> [f64; 4] {
    let (cx, cy) = b.center();
    [cx, cy, b.w, b.h]
}

fn scales(cfg: &KalmanConfig, w: f64, h: f64, pos: bool) -> [f64; 4] {
    let s = if pos { cfg.std_position } else { cfg.std_velocity };
    [s * w, s * h, s * w, s * h]
}

impl KalmanState {
    /// Zero velocity with a wide velocity prior so motion is picked up within a few updates.
    pub fn initiate(b: &BBox, cfg: KalmanConfig) -> Self {
        let z = measurement(b);
        let mut mean = [0.0; 8];
        mean[..4].copy_from_slice(&z);
        let p = scales(&cfg, b.w, b.h, true);
        let mut cov = [[0.0; 8]; 8];
        for i in 0..4 {
            cov[i][i] = (2.0 * p[i]) * (2.0 * p[i]);
            cov[i + 4][i + 4] = (10.0 * p[i]) * (10.0 * p[i]);
        }
        Self { mean, cov, cfg }
    }

    pub fn predicted_box(&self) -> BBox {
        BBox::from_center(
            self.mean[0],
            self.mean[1],
            self.mean[2].max(1e-6),
            self.mean[3].max(1e-6),
        )
    }

    /// One constant-velocity step.
    pub fn predict(&mut self) {
        for i in 0..4 {
            self.mean[i] += self.mean[i + 4];
        }
        // P = F P F^T with F = [[I, I], [0, I]]
        let p = self.cov;
        let mut fp = p;
        for i in 0..4 {
            for j in 0..8 {
                fp[i][j] = p[i][j] + p[i + 4][j];
            }
        }
        let mut out = fp;
        for i in 0..8 {
            for j in 0..4 {
                out[i][j] = fp[i][j] + fp[i][j + 4];
            }
        }
        let pos = scales(&self.cfg, self.mean[2].abs(), self.mean[3].abs(), true);
        let vel = scales(&self.cfg, self.mean[2].abs(), self.mean[3].abs(), false);
        for i in 0..4 {
            out[i][i] += pos[i] * pos[i];
            out[i + 4][i + 4] += vel[i] * vel[i];
        }
        self.cov = out;
    }

    pub fn update(&mut self, b: &BBox) -> Result<(), HeuristicError> {
        let z = measurement(b);
        let r = scales(&self.cfg, self.mean[2].abs(), self.mean[3].abs(), true);
        // S = H P H^T + R, H selects the first four state entries
        let mut s: Mat4 = [[0.0; 4]; 4];
        for i in 0..4 {
            for j in 0..4 {
                s[i][j] = self.cov[i][j];
            }
            s[i][i] += r[i] * r[i];
        }
        let s_inv = invert4(&s).ok_or(HeuristicError::SingularInnovation)?;
        // K = P H^T S^-1, an 8x4 matrix
        let mut k = [[0.0; 4]; 8];
        for i in 0..8 {
            for j in 0..4 {
                k[i][j] = (0..4).map(|l| self.cov[i][l] * s_inv[l][j]).sum();
            }
        }
        let innov: Vec<f64> = (0..4).map(|i| z[i] - self.mean[i]).collect();
        for i in 0..8 {
            self.mean[i] += (0..4).map(|j| k[i][j] * innov[j]).sum::<f64>();
        }
        // P = (I - K H) P
        let p = self.cov;
        for i in 0..8 {
            for j in 0..8 {
                let kh_p: f64 = (0..4).map(|l| k[i][l] * p[l][j]).sum();
                self.cov[i][j] = p[i][j] - kh_p;
            }
        }
        // keep it symmetric against round-off
        for i in 0..8 {
            for j in (i + 1)..8 {
                let avg = 0.5 * (self.cov[i][j] + self.cov[j][i]);
                self.cov[i][j] = avg;
                self.cov[j][i] = avg;
            }
        }
        Ok(())
    }

    pub fn trace(&self) -> f64 {
        (0..8).map(|i| self.cov[i][i]).sum()
    }
}

// Gauss-Jordan with partial pivoting.
fn invert4(m: &Mat4) -> Option<Mat4> {
    let mut a = *m;
    let mut inv: Mat4 = [[0.0; 4]; 4];
    for (i, row) in inv.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for col in 0..4 {
        let pivot = (col..4).max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs()))?;
        if a[pivot][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, pivot);
        inv.swap(col, pivot);
        let d = a[col][col];
        for j in 0..4 {
            a[col][j] /= d;
            inv[col][j] /= d;
        }
        for r in 0..4 {
            if r != col {
                let f = a[r][col];
                for j in 0..4 {
                    a[r][j] -= f * a[col][j];
                    inv[r][j] -= f * inv[col][j];
                }
            }
        }
    }
    Some(inv)
}

/// Runs the filter over a bank (oldest first) and predicts the box at frame `t_cur`.
pub fn kf_predict_from_history(bank: &[Detection], t_cur: u32, cfg: KalmanConfig) -> Result<BBox, HeuristicError> {
    let first = bank.first().ok_or(HeuristicError::EmptyHistory)?;
    let mut kf = KalmanState::initiate(&first.bbox, cfg);
    let mut frame = first.frame;
    for d in &bank[1..] {
        for _ in frame..d.frame {
            kf.predict();
        }
        kf.update(&d.bbox)?;
        frame = d.frame;
    }
    for _ in frame..t_cur {
        kf.predict();
    }
    Ok(kf.predicted_box())
}

fn normalized(v: &[f64]) -> Vec<f64> {
    let n = libm::sqrt(v.iter().map(|x| x * x).sum());
    if n == 0.0 {
        v.to_vec()
    } else {
        v.iter().map(|x| x / n).collect()
    }
}

/// Running appearance summary, unit norm after every update.
#[derive(Debug, Clone, PartialEq)]
pub struct EmaEmbedding {
    pub value: Vec<f64>,
    pub alpha: f64,
}

impl EmaEmbedding {
    pub fn new(first: &[f64], alpha: f64) -> Self {
        Self {
            value: normalized(first),
            alpha,
        }
    }

    /// `e <- normalize(alpha * e + (1 - alpha) * f)`.
    pub fn update(&mut self, f: &[f64]) {
        let mixed: Vec<f64> = self
            .value
            .iter()
            .zip(f)
            .map(|(e, x)| self.alpha * e + (1.0 - self.alpha) * x)
            .collect();
        self.value = normalized(&mixed);
    }
}

/// EMA over the appearance cue of a bank, or `None` when no entry carries it.
pub fn ema_from_history(bank: &[Detection], alpha: f64) -> Option<Vec<f64>> {
    let mut it = bank.iter().filter_map(|d| d.cue(APPEARANCE_CUE));
    let mut e = EmaEmbedding::new(&it.next()?.values, alpha);
    for c in it {
        e.update(&c.values);
    }
    Some(e.value)
}

/// `1 - IoU` between predicted tracklet boxes and detection boxes.
pub fn motion_cost(predicted: &[BBox], dets: &[BBox]) -> CostMatrix {
    let data = predicted
        .iter()
        .flat_map(|p| dets.iter().map(move |d| 1.0 - p.iou(d)))
        .collect();
    CostMatrix::new(predicted.len(), dets.len(), data).expect("dimensions agree by construction")
}

/// Cosine distance `1 - cos`; a missing vector on either side costs 1.
pub fn appearance_cost(tracks: &[Option<Vec<f64>>], dets: &[Option<Vec<f64>>]) -> CostMatrix {
    let mut data = Vec::with_capacity(tracks.len() * dets.len());
    for t in tracks {
        for d in dets {
            data.push(match (t, d) {
                (Some(a), Some(b)) => {
                    let (a, b) = (normalized(a), normalized(b));
                    1.0 - a.iter().zip(&b).map(|(x, y)| x * y).sum::<f64>()
                }
                _ => 1.0,
            });
        }
    }
    CostMatrix::new(tracks.len(), dets.len(), data).expect("dimensions agree by construction")
}

/// `lambda * motion + (1 - lambda) * appearance`.
pub fn fused_cost(motion: &CostMatrix, appearance: &CostMatrix, lambda: f64) -> Result<CostMatrix, AssociationError> {
    CostMatrix::blend(motion, appearance, lambda)
}
