//! ε-sweeps of the measurement functional and the Fourier samples they yield.
//!
//! For boundary data ε·f± the functional I±(ε) = ∫∂Ω ∂νu = ∫Ω q u² behaves like
//! ε²∫q v±² near 0, and v₊² − v₋² = e^{−iξ·x}, so ½·[I₊″(0) − I₋″(0)] = q̂(ξ).

use std::fmt::Write as _;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::{boundary_flux_psi, FESpace, ForwardProblem, ProblemConfig};
use crate::fourier_op::FourierData;
use crate::harmonics::{make_frequency_point, CalderonPair, FrequencyPoint, Sign};
use crate::par::{map_indexed, Execution};
use crate::sgdiff::{sg_derivative_at, SGConfig};

/// A sweep fails when more than this fraction of its samples fail.
pub const MAX_FAILED_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpsilonGrid {
    pub values: Vec<f64>,
}

impl Default for EpsilonGrid {
    fn default() -> Self {
        EpsilonGrid::uniform(64, -2.0, 2.0).expect("default grid is valid")
    }
}

impl EpsilonGrid {
    pub fn uniform(n: usize, min: f64, max: f64) -> Result<Self> {
        if n < 2 || !(min < 0.0 && max > 0.0) {
            return Err(Error::Config(format!(
                "epsilon grid needs at least 2 points on both sides of 0, got {n} points on [{min}, {max}]"
            )));
        }
        let step = (max - min) / (n - 1) as f64;
        let values = (0..n).map(|i| if i == n - 1 { max } else { min + i as f64 * step }).collect();
        let grid = EpsilonGrid { values };
        grid.validate()?;
        Ok(grid)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn spacing(&self) -> f64 {
        (self.values[self.len() - 1] - self.values[0]) / (self.len() - 1) as f64
    }

    pub fn validate(&self) -> Result<()> {
        let v = &self.values;
        if v.len() < 2 {
            return Err(Error::Config("epsilon grid needs at least 2 points".into()));
        }
        let h = self.spacing();
        for (i, w) in v.windows(2).enumerate() {
            if !(w[1] > w[0]) || ((w[1] - w[0]) - h).abs() > 1e-12 * h.max(v[0].abs()).max(v[v.len() - 1].abs()) {
                return Err(Error::Config(format!("epsilon grid is not uniform and increasing at index {i}")));
            }
        }
        if !(v[0] < 0.0 && v[v.len() - 1] > 0.0) {
            return Err(Error::Config("epsilon grid must contain points on both sides of 0".into()));
        }
        Ok(())
    }
}

/// Which discretization of ψ = ∫∂Ω ∂νu is recorded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataPath {
    /// ∫Ω q uᵖ, equal to the boundary flux by the divergence theorem.
    #[default]
    DomainIntegral,
    BoundaryFlux,
}

impl DataPath {
    fn name(self) -> &'static str {
        match self {
            DataPath::DomainIntegral => "domain_integral",
            DataPath::BoundaryFlux => "boundary_flux",
        }
    }

    fn parse(s: &str) -> Result<Self> {
        match s {
            "domain_integral" => Ok(DataPath::DomainIntegral),
            "boundary_flux" => Ok(DataPath::BoundaryFlux),
            _ => Err(Error::Parse(format!("unknown data path {s:?}"))),
        }
    }
}

/// I(ε_k) for one frequency and sign. `None` marks a failed forward solve.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSweep {
    pub frequency: FrequencyPoint,
    pub sign: Sign,
    pub eps: Vec<f64>,
    pub clean: Vec<Option<Complex64>>,
    pub noisy: Vec<Option<Complex64>>,
    pub data_path: DataPath,
    /// Newton iterations per sample (0 for failures and ε = 0).
    pub newton_iterations: Vec<usize>,
}

impl MeasurementSweep {
    pub fn failures(&self) -> usize {
        self.clean.iter().filter(|v| v.is_none()).count()
    }

    /// Largest |I(ε_k)| over the recorded clean samples.
    pub fn max_modulus(&self) -> f64 {
        self.clean.iter().flatten().fold(0.0, |m, v| m.max(v.norm()))
    }

    fn samples(&self, noisy: bool) -> Vec<(f64, Complex64)> {
        let values = if noisy { &self.noisy } else { &self.clean };
        self.eps.iter().zip(values).filter_map(|(&e, v)| v.map(|v| (e, v))).collect()
    }

    /// SG estimate of dʳI/dεʳ at 0 from the clean or noisy samples.
    pub fn derivative_at_zero(&self, sg: &SGConfig, noisy: bool) -> Result<Complex64> {
        sg.validate()?;
        sg_derivative_at(&self.samples(noisy), 0.0, sg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseModel {
    pub rho: f64,
    pub seed: u64,
    /// ChaCha stream; distinct sweeps draw from distinct streams.
    #[serde(default)]
    pub stream: u64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        NoiseModel { rho: 0.01, seed: 0, stream: 0 }
    }
}

impl NoiseModel {
    pub fn with_stream(self, stream: u64) -> Self {
        NoiseModel { stream, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rho >= 0.0) || !self.rho.is_finite() {
            return Err(Error::Config(format!("noise level must be nonnegative, got {}", self.rho)));
        }
        Ok(())
    }

    fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }

    /// σ·(g₁ + i g₂) draws for `n` samples.
    pub fn draws(&self, n: usize, sigma: f64) -> Vec<Complex64> {
        let mut rng = self.rng();
        (0..n)
            .map(|_| {
                let g1: f64 = StandardNormal.sample(&mut rng);
                let g2: f64 = StandardNormal.sample(&mut rng);
                Complex64::new(sigma * g1, sigma * g2)
            })
            .collect()
    }
}

/// Stream index for the sweep of frequency `k` with `sign`.
pub fn noise_stream(k: usize, sign: Sign) -> u64 {
    2 * k as u64 + matches!(sign, Sign::Minus) as u64
}

/// noisy = clean + σ(g₁ + i g₂) with σ = ρ·max|clean| of this sweep.
/// One draw is consumed per grid point, masked or not.
pub fn add_noise(sweep: &MeasurementSweep, noise: &NoiseModel) -> MeasurementSweep {
    let sigma = noise.rho * sweep.max_modulus();
    let mut out = sweep.clone();
    if noise.rho == 0.0 {
        out.noisy = sweep.clean.clone();
        return out;
    }
    let draws = noise.draws(sweep.clean.len(), sigma);
    out.noisy = sweep.clean.iter().zip(draws).map(|(c, d)| c.map(|c| c + d)).collect();
    out
}

/// F + σ(g₁ + i g₂) per frequency with σ = ρ·max|F|, for inversion runs
/// that bypass the PDE stage.
pub fn add_fourier_noise(f: &FourierData, noise: &NoiseModel) -> FourierData {
    let sigma = noise.rho * f.values.iter().fold(0.0f64, |m, v| m.max(v.norm()));
    if noise.rho == 0.0 {
        return f.clone();
    }
    let draws = noise.draws(f.len(), sigma);
    FourierData { xis: f.xis.clone(), values: f.values.iter().zip(draws).map(|(v, d)| v + d).collect() }
}

/// 10·log₁₀(Σ|clean|² / Σ|noisy − clean|²) pooled over the sweeps.
pub fn snr_db(sweeps: &[MeasurementSweep]) -> f64 {
    let mut signal = 0.0;
    let mut noise = 0.0;
    for s in sweeps {
        for (c, n) in s.clean.iter().zip(&s.noisy) {
            if let (Some(c), Some(n)) = (c, n) {
                signal += c.norm_sqr();
                noise += (n - c).norm_sqr();
            }
        }
    }
    10.0 * (signal / noise).log10()
}

/// Run the ε-sweeps for f₊ and f₋ at one frequency.
pub fn sweep_frequency(
    fp: FrequencyPoint,
    grid: &EpsilonGrid,
    space: &FESpace,
    config: &ProblemConfig,
    path: DataPath,
) -> Result<(MeasurementSweep, MeasurementSweep)> {
    let problem = ForwardProblem::new(space, config)?;
    Ok((sweep_one(&problem, fp, Sign::Plus, grid, path)?, sweep_one(&problem, fp, Sign::Minus, grid, path)?))
}

/// One sign's sweep. Samples are solved by continuation outward from ε = 0 on
/// each side: the first solve starts from ε·lift(f), later ones from the
/// linear extrapolation of the previous two solutions. A failed sample is
/// masked and restarts the continuation from the scaled lift.
pub fn sweep_one(
    problem: &ForwardProblem<'_>,
    fp: FrequencyPoint,
    sign: Sign,
    grid: &EpsilonGrid,
    path: DataPath,
) -> Result<MeasurementSweep> {
    grid.validate()?;
    let space = problem.space;
    let pair = CalderonPair::new(fp);
    let base = space.boundary_values(|x| pair.f(sign, x));
    let lift = problem.harmonic_lift(&base)?;
    let n = grid.len();
    let mut clean = vec![None; n];
    let mut iterations = vec![0; n];
    let zero_at = grid.values.iter().position(|&e| e == 0.0);
    if let Some(k) = zero_at {
        clean[k] = Some(Complex64::new(0.0, 0.0));
    }
    let upper: Vec<usize> = (0..n).filter(|&k| grid.values[k] > 0.0).collect();
    let lower: Vec<usize> = (0..n).rev().filter(|&k| grid.values[k] < 0.0).collect();
    for branch in [upper, lower] {
        // (ε, interior values) of the last two converged samples.
        let mut history: Vec<(f64, Vec<Complex64>)> = Vec::new();
        for k in branch {
            let eps = grid.values[k];
            let guess: Vec<Complex64> = match history.as_slice() {
                [.., (e0, u0), (e1, u1)] => {
                    let t = (eps - e1) / (e1 - e0);
                    u1.iter().zip(u0).map(|(a, b)| a + t * (a - b)).collect()
                }
                _ => lift.iter().map(|v| v * eps).collect(),
            };
            let boundary: Vec<Complex64> = base.iter().map(|v| v * eps).collect();
            match problem.solve(&boundary, Some(&guess)) {
                Ok((u, report)) => {
                    let value = match path {
                        DataPath::DomainIntegral => problem.domain_integral(&u)?,
                        DataPath::BoundaryFlux => boundary_flux_psi(space, &u)?,
                    };
                    clean[k] = Some(value);
                    iterations[k] = report.iterations;
                    if history.len() == 2 {
                        history.remove(0);
                    }
                    history.push((eps, problem.interior_values(&u)));
                }
                Err(Error::SolverDivergence { .. }) => history.clear(),
                Err(e) => return Err(e),
            }
        }
    }
    let sweep = MeasurementSweep {
        frequency: fp,
        sign,
        eps: grid.values.clone(),
        noisy: clean.clone(),
        clean,
        data_path: path,
        newton_iterations: iterations,
    };
    let failed = sweep.failures();
    if failed as f64 > MAX_FAILED_FRACTION * n as f64 {
        return Err(Error::SweepFailed { failed, total: n });
    }
    Ok(sweep)
}

/// Sweeps for every frequency, in frequency order. Repeated frequencies (the
/// origin of a polar grid) are solved once and copied.
pub fn sweep_frequencies(
    xis: &[[f64; 2]],
    grid: &EpsilonGrid,
    space: &FESpace,
    config: &ProblemConfig,
    path: DataPath,
    exec: Execution,
) -> Result<Vec<(MeasurementSweep, MeasurementSweep)>> {
    let problem = ForwardProblem::new(space, config)?;
    let mut unique: Vec<[f64; 2]> = Vec::new();
    let mut which = Vec::with_capacity(xis.len());
    for xi in xis {
        let key = [xi[0].to_bits(), xi[1].to_bits()];
        match unique.iter().position(|u| [u[0].to_bits(), u[1].to_bits()] == key) {
            Some(i) => which.push(i),
            None => {
                which.push(unique.len());
                unique.push(*xi);
            }
        }
    }
    let tasks = 2 * unique.len();
    let solved: Vec<Result<MeasurementSweep>> = map_indexed(exec, tasks, |t| {
        let fp = make_frequency_point(unique[t / 2])?;
        let sign = if t % 2 == 0 { Sign::Plus } else { Sign::Minus };
        sweep_one(&problem, fp, sign, grid, path)
    });
    let solved = solved.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(which.into_iter().map(|i| (solved[2 * i].clone(), solved[2 * i + 1].clone())).collect())
}

/// Apply noise to every sweep, each on its own stream.
pub fn add_noise_all(pairs: &[(MeasurementSweep, MeasurementSweep)], noise: &NoiseModel) -> Vec<(MeasurementSweep, MeasurementSweep)> {
    pairs
        .iter()
        .enumerate()
        .map(|(k, (p, m))| {
            (add_noise(p, &noise.with_stream(noise_stream(k, Sign::Plus))), add_noise(m, &noise.with_stream(noise_stream(k, Sign::Minus))))
        })
        .collect()
}

/// ½·[SG²(noisy₊)(0) − SG²(noisy₋)(0)].
pub fn fourier_sample(plus: &MeasurementSweep, minus: &MeasurementSweep, sg: &SGConfig) -> Result<Complex64> {
    fourier_sample_from(plus, minus, sg, true)
}

/// As [`fourier_sample`], choosing the clean or noisy samples.
pub fn fourier_sample_from(plus: &MeasurementSweep, minus: &MeasurementSweep, sg: &SGConfig, noisy: bool) -> Result<Complex64> {
    if plus.frequency != minus.frequency || plus.eps != minus.eps {
        return Err(Error::Shape("sweeps do not share frequency and epsilon grid".into()));
    }
    if plus.sign != Sign::Plus || minus.sign != Sign::Minus {
        return Err(Error::Shape("expected an f₊ sweep and an f₋ sweep".into()));
    }
    let cfg = SGConfig { deriv_order: 2, ..*sg };
    Ok(0.5 * (plus.derivative_at_zero(&cfg, noisy)? - minus.derivative_at_zero(&cfg, noisy)?))
}

/// FourierData from per-frequency sweep pairs (frequency order preserved).
pub fn fourier_data(pairs: &[(MeasurementSweep, MeasurementSweep)], sg: &SGConfig, noisy: bool) -> Result<FourierData> {
    let xis = pairs.iter().map(|(p, _)| p.frequency.xi).collect();
    let values = pairs.iter().map(|(p, m)| fourier_sample_from(p, m, sg, noisy)).collect::<Result<Vec<_>>>()?;
    Ok(FourierData { xis, values })
}

fn fmt_opt(v: Option<Complex64>) -> (String, String) {
    match v {
        Some(z) => (format!("{:e}", z.re), format!("{:e}", z.im)),
        None => ("nan".into(), "nan".into()),
    }
}

/// Text archive of sweeps: per record a `# sweep` header block with ξ, ζ,
/// sign, data path and grid, then rows `eps clean_re clean_im noisy_re
/// noisy_im newton_iterations` (nan for masked samples). Other comment lines
/// are ignored on reading.
pub fn write_sweep_archive(sweeps: &[MeasurementSweep], header: &str) -> String {
    let mut out = String::new();
    for line in header.lines() {
        let _ = writeln!(out, "# {line}");
    }
    for s in sweeps {
        let _ = writeln!(out, "# sweep");
        let _ = writeln!(out, "# xi {:e} {:e}", s.frequency.xi[0], s.frequency.xi[1]);
        let _ = writeln!(out, "# zeta {:e} {:e}", s.frequency.zeta[0], s.frequency.zeta[1]);
        let _ = writeln!(out, "# sign {}", if s.sign == Sign::Plus { "plus" } else { "minus" });
        let _ = writeln!(out, "# path {}", s.data_path.name());
        let _ = writeln!(out, "# grid {} {:e} {:e}", s.eps.len(), s.eps[0], s.eps[s.eps.len() - 1]);
        for k in 0..s.eps.len() {
            let (cr, ci) = fmt_opt(s.clean[k]);
            let (nr, ni) = fmt_opt(s.noisy[k]);
            let _ = writeln!(out, "{:e} {cr} {ci} {nr} {ni} {}", s.eps[k], s.newton_iterations[k]);
        }
    }
    out
}

pub fn read_sweep_archive(text: &str) -> Result<Vec<MeasurementSweep>> {
    struct Partial {
        xi: Option<[f64; 2]>,
        zeta: Option<[f64; 2]>,
        sign: Option<Sign>,
        path: Option<DataPath>,
        rows: Vec<(f64, Option<Complex64>, Option<Complex64>, usize)>,
    }
    let num = |s: &str, line: usize| -> Result<f64> {
        s.parse::<f64>().map_err(|_| Error::Parse(format!("line {line}: bad number {s:?}")))
    };
    let finish = |p: Partial| -> Result<MeasurementSweep> {
        let missing = |what: &str| Error::Parse(format!("sweep record without {what}"));
        let xi = p.xi.ok_or_else(|| missing("xi"))?;
        let zeta = p.zeta.ok_or_else(|| missing("zeta"))?;
        Ok(MeasurementSweep {
            frequency: FrequencyPoint { xi, zeta },
            sign: p.sign.ok_or_else(|| missing("sign"))?,
            eps: p.rows.iter().map(|r| r.0).collect(),
            clean: p.rows.iter().map(|r| r.1).collect(),
            noisy: p.rows.iter().map(|r| r.2).collect(),
            data_path: p.path.ok_or_else(|| missing("path"))?,
            newton_iterations: p.rows.iter().map(|r| r.3).collect(),
        })
    };
    let mut out = Vec::new();
    let mut current: Option<Partial> = None;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let t = raw.trim();
        if t.is_empty() {
            continue;
        }
        if let Some(rest) = t.strip_prefix('#') {
            let words: Vec<&str> = rest.split_whitespace().collect();
            match words.as_slice() {
                ["sweep"] => {
                    if let Some(p) = current.take() {
                        out.push(finish(p)?);
                    }
                    current = Some(Partial { xi: None, zeta: None, sign: None, path: None, rows: Vec::new() });
                }
                [key, args @ ..] if current.is_some() => {
                    let p = current.as_mut().unwrap();
                    match (*key, args) {
                        ("xi", [a, b]) => p.xi = Some([num(a, line)?, num(b, line)?]),
                        ("zeta", [a, b]) => p.zeta = Some([num(a, line)?, num(b, line)?]),
                        ("sign", ["plus"]) => p.sign = Some(Sign::Plus),
                        ("sign", ["minus"]) => p.sign = Some(Sign::Minus),
                        ("path", [s]) => p.path = Some(DataPath::parse(s)?),
                        _ => {}
                    }
                }
                _ => {}
            }
            continue;
        }
        let p = current.as_mut().ok_or_else(|| Error::Parse(format!("line {line}: data before any sweep header")))?;
        let f: Vec<&str> = t.split_whitespace().collect();
        if f.len() != 6 {
            return Err(Error::Parse(format!("line {line}: expected 6 columns, found {}", f.len())));
        }
        let pair = |a: &str, b: &str| -> Result<Option<Complex64>> {
            let (re, im) = (num(a, line)?, num(b, line)?);
            Ok(if re.is_nan() || im.is_nan() { None } else { Some(Complex64::new(re, im)) })
        };
        let iters = f[5].parse::<usize>().map_err(|_| Error::Parse(format!("line {line}: bad iteration count")))?;
        p.rows.push((num(f[0], line)?, pair(f[1], f[2])?, pair(f[3], f[4])?, iters));
    }
    if let Some(p) = current.take() {
        out.push(finish(p)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::FESpace;
    use crate::mesh::build_disk_mesh;
    use crate::potentials::{fourier_oracle, PotentialField};

    fn synthetic(grid: &EpsilonGrid, sign: Sign, f: impl Fn(f64) -> Complex64) -> MeasurementSweep {
        let clean: Vec<_> = grid.values.iter().map(|&e| Some(f(e))).collect();
        MeasurementSweep {
            frequency: make_frequency_point([1.0, 0.5]).unwrap(),
            sign,
            eps: grid.values.clone(),
            noisy: clean.clone(),
            clean,
            data_path: DataPath::DomainIntegral,
            newton_iterations: vec![0; grid.len()],
        }
    }

    #[test]
    fn default_grid() {
        let g = EpsilonGrid::default();
        assert_eq!(g.len(), 64);
        assert_eq!(g.values[0], -2.0);
        assert_eq!(g.values[63], 2.0);
        assert!((g.spacing() - 4.0 / 63.0).abs() < 1e-15);
        assert!(g.validate().is_ok());
        assert!(EpsilonGrid { values: vec![0.0, 1.0, 2.0] }.validate().is_err());
        assert!(EpsilonGrid { values: vec![-1.0, 0.0, 2.0] }.validate().is_err());
    }

    #[test]
    fn exact_on_quadratics() {
        let g = EpsilonGrid::default();
        let (a, b) = (Complex64::new(1.5, -0.25), Complex64::new(-0.5, 2.0));
        let plus = synthetic(&g, Sign::Plus, |e| a * e * e);
        let minus = synthetic(&g, Sign::Minus, |e| b * e * e);
        let got = fourier_sample(&plus, &minus, &SGConfig::default()).unwrap();
        assert!((got - (a - b)).norm() < 1e-10);
    }

    #[test]
    fn zero_noise_is_identity_and_seed_is_deterministic() {
        let g = EpsilonGrid::default();
        let s = synthetic(&g, Sign::Plus, |e| Complex64::new(e * e, e));
        assert_eq!(add_noise(&s, &NoiseModel { rho: 0.0, seed: 3, stream: 0 }).noisy, s.clean);
        let n = NoiseModel { rho: 0.01, seed: 42, stream: 5 };
        assert_eq!(add_noise(&s, &n).noisy, add_noise(&s, &n).noisy);
        assert_ne!(add_noise(&s, &n).noisy, add_noise(&s, &n.with_stream(6)).noisy);
    }

    #[test]
    fn noise_scale_follows_max_modulus() {
        let g = EpsilonGrid::default();
        let s = synthetic(&g, Sign::Plus, |e| Complex64::new(3.0 * e * e, 0.0));
        let noisy = add_noise(&s, &NoiseModel { rho: 0.05, seed: 1, stream: 0 });
        let var: f64 = s.clean.iter().zip(&noisy.noisy).map(|(c, n)| (n.unwrap() - c.unwrap()).norm_sqr()).sum::<f64>()
            / g.len() as f64;
        // E|σ(g₁ + i g₂)|² = 2σ², σ = 0.05·12.
        let expected = 2.0 * (0.05 * 12.0f64).powi(2);
        assert!((var / expected - 1.0).abs() < 0.4, "{var} vs {expected}");
    }

    #[test]
    fn masked_samples_are_skipped() {
        let g = EpsilonGrid::uniform(33, -1.0, 1.0).unwrap();
        let a = Complex64::new(0.7, 0.1);
        let mut plus = synthetic(&g, Sign::Plus, |e| a * e * e + e.powi(3));
        plus.noisy[2] = None;
        plus.noisy[30] = None;
        let minus = synthetic(&g, Sign::Minus, |_| Complex64::new(0.0, 0.0));
        let sg = SGConfig { window: 25, degree: 4, deriv_order: 2 };
        assert!((fourier_sample(&plus, &minus, &sg).unwrap() - a).norm() < 1e-10);
    }

    #[test]
    fn archive_round_trip() {
        let g = EpsilonGrid::uniform(9, -1.0, 1.0).unwrap();
        let mut s = synthetic(&g, Sign::Minus, |e| Complex64::new(e.exp() - 1.0, -e / 3.0));
        s.clean[1] = None;
        s.noisy[1] = None;
        let s = add_noise(&s, &NoiseModel { rho: 0.01, seed: 9, stream: 1 });
        let p = synthetic(&g, Sign::Plus, |e| Complex64::new(e * e, 0.1));
        let text = write_sweep_archive(&[p.clone(), s.clone()], "config_hash abc\nrun test");
        let back = read_sweep_archive(&text).unwrap();
        assert_eq!(back, vec![p, s]);
    }

    #[test]
    fn zero_potential_gives_zero_sweeps() {
        let space = FESpace::new(build_disk_mesh(8).unwrap(), 2).unwrap();
        let config = ProblemConfig::new(PotentialField::Constant { value: 0.0 });
        let grid = EpsilonGrid::uniform(9, -2.0, 2.0).unwrap();
        let fp = make_frequency_point([2.0, 1.0]).unwrap();
        let (p, m) = sweep_frequency(fp, &grid, &space, &config, DataPath::DomainIntegral).unwrap();
        for v in p.clean.iter().chain(&m.clean) {
            assert_eq!(*v, Some(Complex64::new(0.0, 0.0)));
        }
        let sg = SGConfig { window: 7, degree: 4, deriv_order: 2 };
        assert_eq!(fourier_sample(&p, &m, &sg).unwrap(), Complex64::new(0.0, 0.0));
    }

    #[test]
    fn bump_sample_matches_oracle_at_unit_frequency() {
        let space = FESpace::new(build_disk_mesh(24).unwrap(), 3).unwrap();
        let q = PotentialField::centered_bump();
        let config = ProblemConfig::new(q);
        let grid = EpsilonGrid::uniform(33, -1.0, 1.0).unwrap();
        let fp = make_frequency_point([1.0, 0.0]).unwrap();
        let (p, m) = sweep_frequency(fp, &grid, &space, &config, DataPath::DomainIntegral).unwrap();
        assert_eq!(p.clean[16], Some(Complex64::new(0.0, 0.0)));
        let sg = SGConfig { window: 25, degree: 4, deriv_order: 2 };
        let got = fourier_sample(&p, &m, &sg).unwrap();
        let oracle = fourier_oracle(&q, fp.xi, 32).value;
        assert!((got - oracle).norm() <= 0.03 * oracle.norm(), "{got} vs {oracle}");
        // Warm starts keep the per-sample Newton work small.
        assert!(p.newton_iterations.iter().all(|&k| k <= 4), "{:?}", p.newton_iterations);
    }
}
