//! Information backflow between two probe preparations.

use serde::{Deserialize, Serialize};

use nalgebra::{DMatrix, DVector, SMatrix, SVector};

use crate::dynamics::{
    build_liouvillian, probe_bloch, real_generator, to_coefficients, Coeffs, Propagator, Real16,
    TimeGrid,
};
use crate::error::{Error, Result};
use crate::linalg::{self, pauli, ComplexMatrix};
use crate::model::SystemParams;
use crate::state::{BlochVector, DensityMatrix};

/// A single grid cell raising `D` by more than this suggests the grid is too
/// coarse to resolve the oscillations.
pub const COARSE_INCREMENT: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct BackflowCurve {
    pub times: Vec<f64>,
    pub distance: Vec<f64>,
    pub n_cumulative: Vec<f64>,
    /// `(t_k, t_{k+1}, increment)` of cells exceeding [`COARSE_INCREMENT`].
    pub coarse_cells: Vec<(f64, f64, f64)>,
}

impl BackflowCurve {
    pub fn saturation(&self) -> f64 {
        self.n_cumulative.last().copied().unwrap_or(0.0)
    }
}

/// `(n . sigma) ⊗ rho_a`: the difference of the two probe preparations along
/// the unit vector `n`, which evolves linearly.
fn difference_operator(direction: &BlochVector, rho_a0: &DensityMatrix) -> Result<Coeffs> {
    if rho_a0.dim() != 2 {
        return Err(Error::DimensionMismatch {
            expected: "2x2".into(),
            actual: format!("{0}x{0}", rho_a0.dim()),
        });
    }
    let [_, x, y, z] = pauli::all();
    let n: ComplexMatrix = x.scale(direction.x) + y.scale(direction.y) + z.scale(direction.z);
    Ok(to_coefficients(&crate::linalg::kron(&n, rho_a0.matrix())))
}

/// Trace distance of the two probe states from the difference coefficients.
#[inline]
fn distance_of(c: &Coeffs) -> f64 {
    let [x, y, z] = probe_bloch(c);
    0.5 * (x * x + y * y + z * z).sqrt()
}

fn check_distance(d: f64, t: f64) -> Result<()> {
    if !(d.is_finite() && (-1e-10..=1.0 + 1e-10).contains(&d)) {
        return Err(Error::NumericalInvariant(format!(
            "trace distance {d} outside [0, 1] at t = {t}"
        )));
    }
    Ok(())
}

/// Backflow from the pair `|+>, |->` on an explicit grid.
pub fn backflow(
    p: &SystemParams,
    rho_a0: &DensityMatrix,
    grid: &TimeGrid,
) -> Result<BackflowCurve> {
    backflow_along(p, &BlochVector::raw(1.0, 0.0, 0.0), rho_a0, grid)
}

/// Backflow from the antipodal pure pair `(I +- n . sigma)/2`.
pub fn backflow_along(
    p: &SystemParams,
    direction: &BlochVector,
    rho_a0: &DensityMatrix,
    grid: &TimeGrid,
) -> Result<BackflowCurve> {
    if (direction.norm() - 1.0).abs() > 1e-12 {
        return Err(Error::invalid_state(
            "|n| = 1",
            format!("|n| = {}", direction.norm()),
        ));
    }
    let c0 = difference_operator(direction, rho_a0)?;
    let coeffs = Propagator::new(&build_liouvillian(p)?)?.propagate(&c0, grid.times())?;
    let times = grid.times().to_vec();
    let mut distance = Vec::with_capacity(times.len());
    let mut n_cumulative = Vec::with_capacity(times.len());
    let mut coarse_cells = Vec::new();
    let mut n = 0.0;
    for (k, c) in coeffs.iter().enumerate() {
        let d = distance_of(c);
        check_distance(d, times[k])?;
        if k > 0 {
            let inc = d - distance[k - 1];
            if inc > 0.0 {
                n += inc;
            }
            if inc > COARSE_INCREMENT {
                log::warn!(
                    "backflow cell [{}, {}] rises by {inc}: refine the grid",
                    times[k - 1],
                    times[k]
                );
                coarse_cells.push((times[k - 1], times[k], inc));
            }
        }
        distance.push(d);
        n_cumulative.push(n);
    }
    Ok(BackflowCurve {
        times,
        distance,
        n_cumulative,
        coarse_cells,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SaturationOptions {
    /// Integration step; increments are summed on this grid.
    pub dt: f64,
    /// First horizon tried; grown tenfold until the last decade is flat.
    pub initial_horizon: f64,
    pub max_horizon: f64,
    /// Relative change of `N` over the last decade accepted as saturated.
    pub tolerance: f64,
    /// Approximate number of output samples per decade of time.
    pub samples_per_decade: usize,
}

impl Default for SaturationOptions {
    fn default() -> Self {
        Self {
            dt: 0.05,
            initial_horizon: 1e3,
            max_horizon: 1e8,
            tolerance: 1e-3,
            samples_per_decade: 500,
        }
    }
}

impl SaturationOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::invalid_param(
                "dt",
                format!("must be > 0, got {}", self.dt),
            ));
        }
        if !(self.initial_horizon >= 10.0 * self.dt && self.max_horizon >= self.initial_horizon) {
            return Err(Error::invalid_param(
                "horizon",
                format!(
                    "need 10 dt <= initial_horizon <= max_horizon, got {} and {}",
                    self.initial_horizon, self.max_horizon
                ),
            ));
        }
        if !(self.tolerance > 0.0) || self.samples_per_decade == 0 {
            return Err(Error::invalid_param(
                "tolerance",
                "tolerance and samples_per_decade must be positive",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SaturationRun {
    /// Decimated curve; `n_cumulative` is still the sum over every fine step.
    pub curve: BackflowCurve,
    pub horizon: f64,
    /// `(t, N(t))` at each decade boundary reached.
    pub decades: Vec<(f64, f64)>,
    pub last_decade_change: f64,
    pub saturated: bool,
    pub steps: u64,
    /// Dimension of the operator subspace actually propagated.
    pub subspace_dim: usize,
}

impl SaturationRun {
    pub fn saturation(&self) -> f64 {
        self.curve.saturation()
    }
}

fn relative_change(n_then: f64, n_now: f64) -> f64 {
    if n_now == 0.0 {
        0.0
    } else {
        (n_now - n_then) / n_now
    }
}

/// Orthonormal basis of the smallest `R`-invariant subspace containing `c0`
/// and the generator restricted to it. `None` when the subspace is not
/// numerically invariant.
fn reachable_subspace(r: &Real16, c0: &Coeffs) -> Option<(Vec<Coeffs>, DMatrix<f64>)> {
    let mut basis: Vec<Coeffs> = vec![c0.normalize()];
    while basis.len() < 16 {
        let mut w = r * basis[basis.len() - 1];
        let scale = w.norm();
        for _ in 0..2 {
            for q in &basis {
                w -= q * q.dot(&w);
            }
        }
        if w.norm() <= 1e-10 * scale.max(1e-300) {
            break;
        }
        basis.push(w.normalize());
    }
    let m = basis.len();
    let reduced = DMatrix::from_fn(m, m, |i, j| basis[i].dot(&(r * basis[j])));
    let residual = (0..m)
        .map(|j| {
            let mut back = r * basis[j];
            for (i, q) in basis.iter().enumerate() {
                back -= q * reduced[(i, j)];
            }
            back.amax()
        })
        .fold(0.0, f64::max);
    (residual < 1e-12 * r.amax().max(1.0)).then_some((basis, reduced))
}

struct Stream<'a> {
    options: &'a SaturationOptions,
    curve: BackflowCurve,
    decades: Vec<(f64, f64)>,
    n: f64,
    d_prev: f64,
    k: u64,
    next_sample: f64,
    next_decade: f64,
    ratio: f64,
}

impl Stream<'_> {
    #[inline]
    fn record(&mut self, d: f64, last: u64) -> Result<()> {
        if d > self.d_prev {
            self.n += d - self.d_prev;
        }
        self.d_prev = d;
        let t = self.k as f64 * self.options.dt;
        if t >= self.next_decade * (1.0 - 1e-12) {
            self.decades.push((t, self.n));
            self.next_decade *= 10.0;
        }
        if t >= self.next_sample * (1.0 - 1e-12) || self.k == last {
            check_distance(d, t)?;
            self.curve.times.push(t);
            self.curve.distance.push(d);
            self.curve.n_cumulative.push(self.n);
            while self.next_sample <= t * (1.0 + 1e-12) {
                self.next_sample =
                    (self.next_sample * self.ratio).max(self.next_sample + self.options.dt);
            }
        }
        Ok(())
    }
}

const BLOCK: usize = 4;

/// Fixed-size stepper in the reduced coordinates. Samples inside a block of
/// `BLOCK` steps are read off the block's starting state through `O S^j`, so
/// only one matrix-vector product per block sits on the dependency chain.
struct Stepper<const N: usize> {
    step: SMatrix<f64, N, N>,
    obs: SMatrix<f64, 3, N>,
    block: SMatrix<f64, N, N>,
    views: [SMatrix<f64, 3, N>; BLOCK],
}

impl<const N: usize> Stepper<N> {
    fn new(step: &DMatrix<f64>, obs: &DMatrix<f64>) -> Self {
        let m = step.nrows();
        let step =
            SMatrix::<f64, N, N>::from_fn(|i, j| if i < m && j < m { step[(i, j)] } else { 0.0 });
        let obs = SMatrix::<f64, 3, N>::from_fn(|i, j| if j < m { obs[(i, j)] } else { 0.0 });
        let mut power = step;
        let mut views = [SMatrix::zeros(); BLOCK];
        for (j, view) in views.iter_mut().enumerate() {
            if j > 0 {
                power = step * power;
            }
            *view = obs * power;
        }
        Self {
            step,
            obs,
            block: power,
            views,
        }
    }

    #[inline]
    fn distance(obs: &SMatrix<f64, 3, N>, y: &SVector<f64, N>) -> f64 {
        0.5 * (obs * y).norm()
    }

    fn advance(&self, y: &mut SVector<f64, N>, stream: &mut Stream<'_>, last: u64) -> Result<()> {
        let mut blocks = 0u32;
        while stream.k + BLOCK as u64 <= last {
            for view in &self.views {
                stream.k += 1;
                stream.record(Self::distance(view, y), last)?;
            }
            *y = self.block * *y;
            blocks += 1;
            // Fully decayed differences would otherwise crawl through subnormals.
            if blocks % 1024 == 0 && y.amax() < 1e-150 {
                y.fill(0.0);
            }
        }
        while stream.k < last {
            *y = self.step * *y;
            stream.k += 1;
            stream.record(Self::distance(&self.obs, y), last)?;
        }
        if !y.iter().all(|x| x.is_finite()) {
            return Err(Error::NonFinite {
                time: stream.k as f64 * stream.options.dt,
            });
        }
        Ok(())
    }
}

/// Stream the pair `|+>, |->` on a fine uniform grid until `N` stops
/// growing over a full decade of time, or `max_horizon` is reached.
pub fn saturation_run(
    p: &SystemParams,
    rho_a0: &DensityMatrix,
    options: &SaturationOptions,
) -> Result<SaturationRun> {
    options.validate()?;
    let generator = real_generator(&build_liouvillian(p)?)?;
    let c0 = difference_operator(&BlochVector::raw(1.0, 0.0, 0.0), rho_a0)?;

    // Propagate only within the subspace the difference operator explores.
    let (basis, reduced) = reachable_subspace(&generator, &c0).unwrap_or_else(|| {
        let basis = (0..16)
            .map(|k| Coeffs::from_fn(|i, _| if i == k { 1.0 } else { 0.0 }))
            .collect();
        (
            basis,
            DMatrix::from_column_slice(16, 16, generator.as_slice()),
        )
    });
    let m = basis.len();
    log::debug!("backflow propagates in a {m}-dimensional subspace");
    let step = linalg::expm(&(reduced * options.dt));
    let obs = DMatrix::from_fn(3, m, |i, j| probe_bloch(&basis[j])[i]);
    let y0 = DVector::from_fn(m, |i, _| basis[i].dot(&c0));

    let d0 = distance_of(&c0);
    let mut stream = Stream {
        options,
        curve: BackflowCurve {
            times: vec![0.0],
            distance: vec![d0],
            n_cumulative: vec![0.0],
            coarse_cells: vec![],
        },
        decades: Vec::new(),
        n: 0.0,
        d_prev: d0,
        k: 0,
        next_sample: options.dt,
        next_decade: 1.0,
        ratio: 10f64.powf(1.0 / options.samples_per_decade as f64),
    };

    let (horizon, change) = match m {
        0..=4 => drive::<4>(&step, &obs, &y0, &mut stream),
        5..=6 => drive::<6>(&step, &obs, &y0, &mut stream),
        7..=8 => drive::<8>(&step, &obs, &y0, &mut stream),
        9..=12 => drive::<12>(&step, &obs, &y0, &mut stream),
        _ => drive::<16>(&step, &obs, &y0, &mut stream),
    }?;
    let saturated = change < options.tolerance;
    if !saturated {
        log::warn!("backflow not saturated at t = {horizon}: last decade changed N by {change:e}");
    }
    Ok(SaturationRun {
        horizon,
        last_decade_change: change,
        saturated,
        steps: stream.k,
        subspace_dim: m,
        curve: stream.curve,
        decades: stream.decades,
    })
}

/// Grow the horizon tenfold until the last decade is flat or the cap is hit.
/// Returns the final horizon and the relative change over its last decade.
fn drive<const N: usize>(
    step: &DMatrix<f64>,
    obs: &DMatrix<f64>,
    y0: &DVector<f64>,
    stream: &mut Stream<'_>,
) -> Result<(f64, f64)> {
    let options = stream.options;
    let stepper = Stepper::<N>::new(step, obs);
    let mut y = SVector::<f64, N>::from_fn(|i, _| if i < y0.len() { y0[i] } else { 0.0 });
    let mut horizon = options.initial_horizon;
    let mut n_decade_ago = 0.0;
    loop {
        let last = (horizon / options.dt).round() as u64;
        stepper.advance(&mut y, stream, last)?;
        let tenth = horizon / 10.0;
        if let Some(&(_, n_then)) = stream
            .decades
            .iter()
            .rev()
            .find(|(t, _)| *t <= tenth * (1.0 + 1e-9))
        {
            n_decade_ago = n_then;
        }
        let change = relative_change(n_decade_ago, stream.n);
        if change < options.tolerance || horizon >= options.max_horizon {
            return Ok((horizon, change));
        }
        horizon = (horizon * 10.0).min(options.max_horizon);
    }
}

/// Largest backflow over antipodal pure probe pairs on a `(theta, phi)`
/// grid of the Bloch sphere. Returns `(N, direction)`.
pub fn maximize_over_pairs(
    p: &SystemParams,
    rho_a0: &DensityMatrix,
    grid: &TimeGrid,
    resolution: usize,
) -> Result<(f64, BlochVector)> {
    if resolution < 2 {
        return Err(Error::invalid_param(
            "resolution",
            "need at least 2 polar angles",
        ));
    }
    let mut best = (f64::NEG_INFINITY, BlochVector::raw(1.0, 0.0, 0.0));
    // antipodal pairs: directions on the upper hemisphere suffice
    for i in 0..=resolution {
        let theta = 0.5 * std::f64::consts::PI * i as f64 / resolution as f64;
        let n_phi = if i == 0 { 1 } else { 2 * resolution };
        for j in 0..n_phi {
            let phi = std::f64::consts::TAU * j as f64 / n_phi as f64;
            let dir = BlochVector::raw(
                theta.sin() * phi.cos(),
                theta.sin() * phi.sin(),
                theta.cos(),
            );
            let n = backflow_along(p, &dir, rho_a0, grid)?.saturation();
            if n > best.0 {
                best = (n, dir);
            }
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::InteractionKind;
    use crate::state::trace_distance;

    #[test]
    fn decoupled_probe_has_no_backflow() {
        for kind in InteractionKind::ALL {
            let p = SystemParams::reference(kind, 0.0);
            let curve = backflow(
                &p,
                &DensityMatrix::excited(),
                &TimeGrid::linear(200.0, 2001).unwrap(),
            )
            .unwrap();
            assert!(curve.distance.iter().all(|d| (d - 1.0).abs() < 1e-10));
            assert!(curve.saturation() < 1e-10);
        }
    }

    #[test]
    fn distance_matches_reduced_states() {
        use crate::dynamics::{evolve, reduce_probe};
        let p = SystemParams::reference(InteractionKind::XZ, 0.06);
        let grid = TimeGrid::linear(60.0, 61).unwrap();
        let anc = DensityMatrix::excited();
        let curve = backflow(&p, &anc, &grid).unwrap();
        let l = build_liouvillian(&p).unwrap();
        let a =
            reduce_probe(&evolve(&l, &DensityMatrix::plus().tensor(&anc), &grid).unwrap()).unwrap();
        let b = reduce_probe(&evolve(&l, &DensityMatrix::minus().tensor(&anc), &grid).unwrap())
            .unwrap();
        for k in 0..grid.len() {
            let d = trace_distance(&a[k], &b[k]).unwrap();
            assert!((d - curve.distance[k]).abs() < 1e-10);
        }
        assert_eq!(curve.distance[0], 1.0);
        assert_eq!(curve.n_cumulative[0], 0.0);
        assert!(curve.n_cumulative.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn streaming_matches_explicit_grid() {
        let options = SaturationOptions {
            initial_horizon: 500.0,
            max_horizon: 500.0,
            ..Default::default()
        };
        let grid = TimeGrid::linear(500.0, 10001).unwrap();
        for kind in InteractionKind::ALL {
            let p = SystemParams::reference(kind, 0.06);
            let run = saturation_run(&p, &DensityMatrix::excited(), &options).unwrap();
            let explicit = backflow(&p, &DensityMatrix::excited(), &grid).unwrap();
            assert!(
                (run.saturation() - explicit.saturation()).abs() < 1e-10,
                "{kind}"
            );
            assert_eq!(run.steps, 10000);
            assert_eq!(*run.curve.times.last().unwrap(), 500.0);
            assert!(run.subspace_dim < 16, "{kind}");
        }
    }

    #[test]
    fn coarse_grid_is_flagged() {
        let p = SystemParams::reference(InteractionKind::XXplusZX, 0.09);
        let curve = backflow(
            &p,
            &DensityMatrix::excited(),
            &TimeGrid::linear(200.0, 21).unwrap(),
        )
        .unwrap();
        assert!(!curve.coarse_cells.is_empty());
    }

    #[test]
    fn pair_search_covers_the_plus_minus_pair() {
        let p = SystemParams::reference(InteractionKind::XX, 0.09);
        let grid = TimeGrid::linear(100.0, 1001).unwrap();
        let anc = DensityMatrix::excited();
        let (best, _) = maximize_over_pairs(&p, &anc, &grid, 4).unwrap();
        let plus_minus = backflow(&p, &anc, &grid).unwrap().saturation();
        assert!(best >= plus_minus - 1e-12);
    }
}
