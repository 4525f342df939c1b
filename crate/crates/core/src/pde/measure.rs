//! Bubble detection and local quantities: heights M_kt, ε_kt = e^{−M_kt/2},
//! local masses ρ_it and the background part ρ_ib.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::green::{torus_distance, Point};
use crate::pde::solver::{weights, FieldState, MeanFieldProblem};

pub const DEFAULT_DELTA0: f64 = 0.15;
pub const DEFAULT_PROMINENCE: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasureSettings {
    pub delta0: f64,
    pub prominence: f64,
}

impl Default for MeasureSettings {
    fn default() -> Self {
        Self { delta0: DEFAULT_DELTA0, prominence: DEFAULT_PROMINENCE }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bubble {
    pub point: Point,
    /// max_i max_{B(p,δ0)} Θ_i.
    pub height: f64,
    pub eps: f64,
    pub prominence: f64,
    /// ρ_i ∫_B h_i e^{Θ_i}, per component.
    pub rho: Vec<f64>,
    /// ρ_it / 2π.
    pub local_mass: Vec<f64>,
    /// ∫_B e^{Θ_i}, without the weight.
    pub unweighted_mass: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub bubbles: Vec<Bubble>,
    /// ρ_i ∫ outside all disks.
    pub rho_b: Vec<f64>,
    /// max_i |Σ_t ρ_it + ρ_ib − ρ_i|.
    pub partition_defect: f64,
    /// max_{s,t} |M_ks − M_kt|.
    pub height_gap: f64,
    /// max_{i,s,t} |ρ_is − ρ_it| / 2π.
    pub mass_gap: f64,
    /// Same for the unweighted masses.
    pub unweighted_gap: f64,
    pub theta_max: f64,
}

impl Measurement {
    pub fn min_eps(&self) -> Option<f64> {
        self.bubbles.iter().map(|b| b.eps).reduce(f64::min)
    }
}

fn gaps(v: &[Vec<f64>]) -> f64 {
    let mut g: f64 = 0.0;
    for a in v {
        for b in v {
            for (x, y) in a.iter().zip(b) {
                g = g.max((x - y).abs());
            }
        }
    }
    g
}

/// Local maxima of f over 3×3 periodic neighborhoods; ties go to the first index.
fn local_maxima(f: &[f64], m: usize) -> Vec<usize> {
    let mut out = Vec::new();
    for i in 0..m {
        for j in 0..m {
            let k = i * m + j;
            let mut best = true;
            'nb: for di in [m - 1, 0, 1] {
                for dj in [m - 1, 0, 1] {
                    if di == 0 && dj == 0 {
                        continue;
                    }
                    let q = ((i + di) % m) * m + (j + dj) % m;
                    if f[q] > f[k] || (f[q] == f[k] && q < k) {
                        best = false;
                        break 'nb;
                    }
                }
            }
            if best {
                out.push(k);
            }
        }
    }
    out
}

pub fn measure(p: &MeanFieldProblem, state: &FieldState, rho: &[f64], settings: &MeasureSettings) -> Result<Measurement> {
    let grid = &p.grid;
    let m = grid.resolution();
    let h = grid.spacing();
    let delta0 = settings.delta0;
    if delta0 < 4.0 * h || delta0 >= 0.5 {
        return Err(Error::Input(format!("δ0 = {delta0} must lie in [4h, 0.5) with h = {h}")));
    }
    if rho.len() != p.n() {
        return Err(Error::Input("ρ has the wrong length".into()));
    }
    let u = state.fields(grid);
    let n = p.n();
    let mut theta = Vec::with_capacity(n);
    let mut w = Vec::with_capacity(n);
    for (i, ui) in u.iter().enumerate() {
        let wi = weights(p, i, ui)?;
        theta.push(ui.iter().map(|x| x - wi.log_integral).collect::<Vec<f64>>());
        w.push(wi.w);
    }
    let tmax: Vec<f64> =
        (0..grid.len()).map(|k| theta.iter().map(|t| t[k]).fold(f64::NEG_INFINITY, f64::max)).collect();
    let theta_max = tmax.iter().cloned().fold(f64::NEG_INFINITY, f64::max);

    // prominence against the highest value on the ring |x − p| ≈ δ0
    let mut peaks: Vec<(usize, f64)> = local_maxima(&tmax, m)
        .into_iter()
        .filter_map(|k| {
            let c = grid.point(k);
            let ring = (0..grid.len())
                .filter(|&q| (grid.dist2(q, c).sqrt() - delta0).abs() <= h)
                .map(|q| tmax[q])
                .fold(f64::NEG_INFINITY, f64::max);
            let prom = tmax[k] - ring;
            (prom >= settings.prominence).then_some((k, prom))
        })
        .collect();
    peaks.sort_by(|a, b| tmax[b.0].total_cmp(&tmax[a.0]).then(a.0.cmp(&b.0)));

    let centers: Vec<Point> = peaks.iter().map(|&(k, _)| grid.point(k)).collect();
    for s in 0..centers.len() {
        for t in s + 1..centers.len() {
            let d = torus_distance(centers[s], centers[t]);
            if d <= 2.0 * delta0 {
                return Err(Error::Separation(format!(
                    "bubbles at {:?} and {:?} are {d:.4} apart, need more than 2δ0 = {}",
                    centers[s],
                    centers[t],
                    2.0 * delta0
                )));
            }
        }
    }

    // disjoint index sets: each disk, then the rest
    let mut owner = vec![usize::MAX; grid.len()];
    for (t, c) in centers.iter().enumerate() {
        for (k, o) in owner.iter_mut().enumerate() {
            if grid.dist2(k, *c) <= delta0 * delta0 {
                *o = t;
            }
        }
    }
    let area = h * h;
    let nb = centers.len();
    let mut rho_t = vec![vec![0.0; n]; nb];
    let mut plain = vec![vec![0.0; n]; nb];
    let mut heights = vec![f64::NEG_INFINITY; nb];
    let mut rho_b = vec![0.0; n];
    for k in 0..grid.len() {
        match owner[k] {
            usize::MAX => {
                for i in 0..n {
                    rho_b[i] += w[i][k];
                }
            }
            t => {
                heights[t] = heights[t].max(tmax[k]);
                for i in 0..n {
                    rho_t[t][i] += w[i][k];
                    plain[t][i] += theta[i][k].exp();
                }
            }
        }
    }
    for i in 0..n {
        rho_b[i] *= rho[i] * area;
        for t in 0..nb {
            rho_t[t][i] *= rho[i] * area;
            plain[t][i] *= area;
        }
    }
    let partition_defect = (0..n)
        .map(|i| ((0..nb).map(|t| rho_t[t][i]).sum::<f64>() + rho_b[i] - rho[i]).abs())
        .fold(0.0, f64::max);
    let two_pi = 2.0 * std::f64::consts::PI;
    let masses: Vec<Vec<f64>> = rho_t.iter().map(|r| r.iter().map(|x| x / two_pi).collect()).collect();
    let bubbles: Vec<Bubble> = (0..nb)
        .map(|t| Bubble {
            point: centers[t],
            height: heights[t],
            eps: (-0.5 * heights[t]).exp(),
            prominence: peaks[t].1,
            rho: rho_t[t].clone(),
            local_mass: masses[t].clone(),
            unweighted_mass: plain[t].clone(),
        })
        .collect();
    let height_gap = gaps(&heights.iter().map(|x| vec![*x]).collect::<Vec<_>>());
    Ok(Measurement {
        bubbles,
        rho_b,
        partition_defect,
        height_gap,
        mass_gap: gaps(&masses),
        unweighted_gap: gaps(&plain),
        theta_max,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::WeightFunction;
    use crate::system_algebra::InteractionMatrix;
    use std::f64::consts::PI;

    fn bump_state(p: &MeanFieldProblem, centers: &[Point], lam: f64) -> FieldState {
        let u = p.grid.sample(|x| {
            centers
                .iter()
                .map(|c| {
                    let d = crate::green::min_image(x, *c);
                    -2.0 * (1.0 + lam * (d[0] * d[0] + d[1] * d[1])).ln()
                })
                .sum()
        });
        FieldState::from_fields(&p.grid, &[u])
    }

    #[test]
    fn single_bubble_partition_and_gauge() {
        let p = MeanFieldProblem::new(InteractionMatrix::scalar(1.0).unwrap(), vec![WeightFunction::one()], 128).unwrap();
        let st = bump_state(&p, &[[0.25, 0.5]], 2000.0);
        let rho = [8.0 * PI];
        let a = measure(&p, &st, &rho, &MeasureSettings::default()).unwrap();
        assert_eq!(a.bubbles.len(), 1);
        assert_eq!(a.bubbles[0].point, [0.25, 0.5]);
        assert!(a.partition_defect < 1e-12);
        let shifted = st.shifted(&[3.7]);
        let b = measure(&p, &shifted.normalize(&p).unwrap(), &rho, &MeasureSettings::default()).unwrap();
        assert!((a.bubbles[0].height - b.bubbles[0].height).abs() < 1e-12);
        assert!((a.bubbles[0].eps - (-0.5 * a.bubbles[0].height).exp()).abs() == 0.0);
    }

    #[test]
    fn symmetric_pair_has_equal_heights() {
        let p = MeanFieldProblem::new(InteractionMatrix::scalar(1.0).unwrap(), vec![WeightFunction::one()], 128).unwrap();
        let st = bump_state(&p, &[[0.0, 0.0], [0.5, 0.0]], 1500.0);
        let r = measure(&p, &st, &[16.0 * PI], &MeasureSettings::default()).unwrap();
        assert_eq!(r.bubbles.len(), 2);
        assert!(r.height_gap < 1e-6);
        assert!(r.mass_gap < 1e-10);
        assert!(r.partition_defect < 1e-12);
        let close = bump_state(&p, &[[0.0, 0.0], [0.25, 0.0]], 1500.0);
        assert!(matches!(measure(&p, &close, &[16.0 * PI], &MeasureSettings::default()), Err(Error::Separation(_))));
        let flat = FieldState::zeros(1, 128);
        assert!(measure(&p, &flat, &[1.0], &MeasureSettings::default()).unwrap().bubbles.is_empty());
        let tiny = MeasureSettings { delta0: 0.01, ..Default::default() };
        assert!(matches!(measure(&p, &flat, &[1.0], &tiny), Err(Error::Input(_))));
    }
}
