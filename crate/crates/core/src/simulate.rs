//! Trace simulation and random model sampling.

use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::descriptors::stationary_vectors;
use crate::error::{Error, Result};
use crate::linalg::Mat2;
use crate::model::BmmppModel;

/// Inter-event times and batch sizes; `t[j]` is the gap ending at event `j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub t: Vec<f64>,
    pub b: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub origin: Option<String>,
}

/// Seed and stream of the counter-based generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngSpec {
    pub seed: u64,
    pub stream: u64,
}

/// Initial phase of a simulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum InitialPhase {
    /// Stationary at event epochs.
    #[default]
    StationaryPhi,
    /// Time-stationary.
    StationaryPi,
    /// Fixed state, 0 or 1.
    State(usize),
}

/// Sampling ranges for [`sample_random_model`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelBounds {
    /// Range of the silent switch rates `y`, `r`.
    pub switch: (f64, f64),
    /// Range of the total event rates `-x-y`, `-r-u`.
    pub event: (f64, f64),
    /// Draw rates log-uniformly instead of uniformly.
    pub log_scale: bool,
}

impl Default for ModelBounds {
    fn default() -> Self {
        Self { switch: (0.01, 10.0), event: (0.01, 10.0), log_scale: true }
    }
}

impl RngSpec {
    pub fn new(seed: u64, stream: u64) -> Self {
        Self { seed, stream }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }
}

impl Trace {
    pub fn new(t: Vec<f64>, b: Vec<usize>) -> Result<Self> {
        let tr = Self { t, b, origin: None };
        tr.validate(None)?;
        Ok(tr)
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn max_batch(&self) -> usize {
        self.b.iter().copied().max().unwrap_or(0)
    }

    /// Checks lengths, positive times and batch sizes in `1..=k`.
    pub fn validate(&self, k: Option<usize>) -> Result<()> {
        if self.t.len() != self.b.len() {
            return Err(Error::InvalidTrace(format!("{} times but {} batch sizes", self.t.len(), self.b.len())));
        }
        for (i, (&t, &b)) in self.t.iter().zip(&self.b).enumerate() {
            if !(t > 0.0) || !t.is_finite() {
                return Err(Error::NonPositiveTime { value: t, index: i });
            }
            if b == 0 {
                return Err(Error::InvalidTrace(format!("batch size 0 at event {i}")));
            }
            if let Some(k) = k {
                if b > k {
                    return Err(Error::BatchAboveK { batch: b, index: i, k });
                }
            }
        }
        Ok(())
    }

    /// CSV with header `t,b`; times carry 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,b")?;
        for (t, b) in self.t.iter().zip(&self.b) {
            writeln!(w, "{},{}", fmt_sig(*t, 17), b)?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut t = Vec::new();
        let mut b = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') || (i == 0 && line.starts_with('t')) {
                continue;
            }
            let mut parts = line.split(',').map(str::trim);
            let (Some(ts), Some(bs)) = (parts.next(), parts.next()) else {
                return Err(Error::Parse { line: i + 1, message: "expected two columns t,b".into() });
            };
            let tv: f64 = ts.parse().map_err(|e| Error::Parse { line: i + 1, message: format!("time: {e}") })?;
            let bv: usize = bs.parse().map_err(|e| Error::Parse { line: i + 1, message: format!("batch: {e}") })?;
            t.push(tv);
            b.push(bv);
        }
        Trace::new(t, b)
    }
}

/// Decimal rendering with `sig` significant digits.
pub fn fmt_sig(v: f64, sig: usize) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{v}");
    }
    let mag = v.abs().log10().floor() as i64;
    let decimals = (sig as i64 - 1 - mag).max(0) as usize;
    format!("{v:.decimals$}")
}

pub(crate) struct Stepper {
    /// Exit rate per state.
    rate: [f64; 2],
    /// Cumulative outcome rates per state: switch, then batch 1..K.
    cum: [Vec<f64>; 2],
}

impl Stepper {
    pub(crate) fn new(m: &BmmppModel) -> Self {
        let make = |s: usize| {
            let off = if s == 0 { m.y() } else { m.r() };
            let mut acc = off;
            let mut cum = vec![acc];
            for d in m.batch_diagonals() {
                acc += d[s];
                cum.push(acc);
            }
            cum
        };
        Self { rate: [-m.x(), -m.u()], cum: [make(0), make(1)] }
    }

    /// Advances one transition; returns the holding time and the emitted
    /// batch size (0 for a silent switch).
    pub(crate) fn step<R: Rng>(&self, state: &mut usize, rng: &mut R) -> (f64, usize) {
        let s = *state;
        let e: f64 = Exp1.sample(rng);
        let hold = e / self.rate[s];
        let cum = &self.cum[s];
        let total = cum[cum.len() - 1];
        let u = rng.random::<f64>() * total;
        if u < cum[0] {
            *state = 1 - s;
            return (hold, 0);
        }
        let k = cum[1..].iter().position(|c| u < *c).unwrap_or(cum.len() - 2);
        (hold, k + 1)
    }
}

pub(crate) fn initial_state<R: Rng>(m: &BmmppModel, init: InitialPhase, rng: &mut R) -> Result<usize> {
    let p = match init {
        InitialPhase::StationaryPhi => stationary_vectors(m)?.phi[0],
        InitialPhase::StationaryPi => stationary_vectors(m)?.pi[0],
        InitialPhase::State(s) if s < 2 => return Ok(s),
        InitialPhase::State(s) => return Err(Error::InvalidModel(format!("initial state {s} not in {{0, 1}}"))),
    };
    Ok(if rng.random::<f64>() < p { 0 } else { 1 })
}

fn check_simulable(m: &BmmppModel) -> Result<()> {
    m.validate().into_result()?;
    let rates = m.event_rates();
    if rates[0] + rates[1] <= 0.0 {
        return Err(Error::ZeroEventRate);
    }
    Ok(())
}

/// Simulates `n` events of the continuous-time process.
pub fn simulate_trace(m: &BmmppModel, n: usize, spec: RngSpec, init: InitialPhase) -> Result<Trace> {
    check_simulable(m)?;
    if n == 0 {
        return Err(Error::InvalidTrace("n must be at least 1".into()));
    }
    let mut rng = spec.rng();
    let mut state = initial_state(m, init, &mut rng)?;
    let stepper = Stepper::new(m);
    let mut t = Vec::with_capacity(n);
    let mut b = Vec::with_capacity(n);
    let mut acc = 0.0;
    while t.len() < n {
        let (h, k) = stepper.step(&mut state, &mut rng);
        acc += h;
        if k > 0 {
            t.push(acc);
            b.push(k);
            acc = 0.0;
        }
    }
    Ok(Trace { t, b, origin: Some(format!("simulated seed={} stream={}", spec.seed, spec.stream)) })
}

/// Event counts over `[0, horizon]` per replication, time-stationary start.
/// Returns `(total events, events per batch size)` for each replication.
pub fn simulate_counts(m: &BmmppModel, horizon: f64, reps: usize, spec: RngSpec) -> Result<Vec<(u64, Vec<u64>)>> {
    check_simulable(m)?;
    let mut rng = spec.rng();
    let stepper = Stepper::new(m);
    let mut out = Vec::with_capacity(reps);
    for _ in 0..reps {
        let mut state = initial_state(m, InitialPhase::StationaryPi, &mut rng)?;
        let mut clock = 0.0;
        let mut total = 0;
        let mut by = vec![0u64; m.k()];
        loop {
            let (h, k) = stepper.step(&mut state, &mut rng);
            clock += h;
            if clock > horizon {
                break;
            }
            if k > 0 {
                total += 1;
                by[k - 1] += 1;
            }
        }
        out.push((total, by));
    }
    Ok(out)
}

fn draw<R: Rng>(rng: &mut R, range: (f64, f64), log_scale: bool) -> f64 {
    let (lo, hi) = range;
    if lo >= hi {
        return lo;
    }
    if log_scale {
        (lo.ln() + rng.random::<f64>() * (hi.ln() - lo.ln())).exp()
    } else {
        lo + rng.random::<f64>() * (hi - lo)
    }
}

/// Random valid BMMPP₂(K): switch and event rates drawn within `bounds`,
/// each state's event rate split over batch sizes by normalized uniform
/// weights. Resamples (bounded) until the model is irreducible and valid.
pub fn sample_random_model<R: Rng>(k: usize, rng: &mut R, bounds: &ModelBounds) -> Result<BmmppModel> {
    if k == 0 {
        return Err(Error::InvalidModel("K must be at least 1".into()));
    }
    let positive = |r: (f64, f64)| r.0 > 0.0 && r.1 >= r.0;
    if !positive(bounds.switch) || !positive(bounds.event) {
        return Err(Error::InvalidModel("bounds must be positive ranges".into()));
    }
    for _ in 0..1000 {
        let y = draw(rng, bounds.switch, bounds.log_scale);
        let r = draw(rng, bounds.switch, bounds.log_scale);
        let l1 = draw(rng, bounds.event, bounds.log_scale);
        let l2 = draw(rng, bounds.event, bounds.log_scale);
        let mut wts = [vec![0.0; k], vec![0.0; k]];
        for s in 0..2 {
            for v in wts[s].iter_mut() {
                *v = rng.random::<f64>();
            }
            let tot: f64 = wts[s].iter().sum();
            for v in wts[s].iter_mut() {
                *v /= tot;
            }
        }
        let d0 = Mat2::new(-y - l1, y, r, -r - l2);
        let interior: Vec<[f64; 2]> = (0..k - 1).map(|i| [l1 * wts[0][i], l2 * wts[1][i]]).collect();
        let m = BmmppModel::from_interior(d0, &interior)?;
        if m.validate().is_valid() && m.is_irreducible() {
            return Ok(m);
        }
    }
    Err(Error::NoConvergence("could not draw a valid model within 1000 attempts".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{batch_means_se, mean};

    fn reference_k2() -> BmmppModel {
        BmmppModel::new(Mat2::new(-5.0, 2.0, 5.0, -10.0), vec![[1.0, 2.0], [2.0, 3.0]]).unwrap()
    }

    #[test]
    fn deterministic_per_seed_and_stream() {
        let m = reference_k2();
        let a = simulate_trace(&m, 500, RngSpec::new(7, 0), InitialPhase::default()).unwrap();
        let b = simulate_trace(&m, 500, RngSpec::new(7, 0), InitialPhase::default()).unwrap();
        let c = simulate_trace(&m, 500, RngSpec::new(7, 1), InitialPhase::default()).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.t, c.t);
        assert!(a.validate(Some(2)).is_ok());
    }

    #[test]
    fn poisson_trace() {
        let m = BmmppModel::new(Mat2::new(-3.0, 1.0, 1.0, -3.0), vec![[2.0, 2.0]]).unwrap();
        let tr = simulate_trace(&m, 200_000, RngSpec::new(1, 0), InitialPhase::State(0)).unwrap();
        assert!(tr.b.iter().all(|&b| b == 1));
        let se = batch_means_se(&tr.t, 100);
        assert!((mean(&tr.t) - 0.5).abs() < 4.0 * se);
    }

    #[test]
    fn zero_rate_rejected() {
        let m = BmmppModel::new(Mat2::new(-1.0, 1.0, 1.0, -1.0), vec![[0.0, 0.0]]).unwrap();
        assert_eq!(simulate_trace(&m, 1, RngSpec::new(1, 0), InitialPhase::State(0)), Err(Error::ZeroEventRate));
    }

    #[test]
    fn csv_round_trip() {
        let tr = simulate_trace(&reference_k2(), 50, RngSpec::new(3, 0), InitialPhase::default()).unwrap();
        let mut buf = Vec::new();
        tr.write_csv(&mut buf).unwrap();
        let back = Trace::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back.t, tr.t);
        assert_eq!(back.b, tr.b);
        assert_eq!(fmt_sig(0.001, 9), "0.00100000000");
        assert!(Trace::read_csv("t,b\n0.1,0\n".as_bytes()).is_err());
    }

    #[test]
    fn random_models_are_valid() {
        let mut rng = RngSpec::new(11, 0).rng();
        for k in 1..=4 {
            for _ in 0..200 {
                let m = sample_random_model(k, &mut rng, &ModelBounds::default()).unwrap();
                assert!(m.validate().is_valid() && m.is_irreducible());
                assert_eq!(m.k(), k);
            }
        }
        let sym = ModelBounds { switch: (2.0, 2.0), ..Default::default() };
        let m = sample_random_model(2, &mut rng, &sym).unwrap();
        assert_eq!(m.y(), m.r());
    }
}
