//! Bosonic bath: spectral density and the two-time correlation function
//! `Γ(τ) = tr[B(τ)B(0)ρ_B]`, tabulated on the solver grid.
//!
//! For the Ohmic bath with a sharp cutoff, `J(ω) = 2παω` on `0 < ω < ω_c`,
//! and
//!
//! ```text
//! Γ(τ) = (1/4π) ∫ dω J(ω) [(n(ω)+1) e^{-iωτ} + n(ω) e^{iωτ}]
//! ```
//!
//! At zero temperature this is `(α/2) ∫₀^{ω_c} ω e^{-iωτ} dω`, which has the
//! closed form `(α/2)[e^{-iω_cτ}(1 + iω_cτ) − 1]/τ²`.

use std::io::{BufRead, Write};

use thiserror::Error;

use crate::qops::{C64, ZERO};
use crate::quad;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BathError {
    #[error("invalid bath parameter {name} = {value}")]
    InvalidParameter { name: &'static str, value: f64 },
    #[error("quadrature for Γ({tau}) did not converge (error estimate {achieved:.3e})")]
    Quadrature { tau: f64, achieved: f64 },
    #[error("time step must be positive, got {0}")]
    InvalidStep(f64),
    #[error("malformed correlation cache: {0}")]
    Cache(String),
    #[error("{0}")]
    Unsupported(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BathKind {
    OhmicSharpCutoff,
}

impl std::str::FromStr for BathKind {
    type Err = BathError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ohmic_sharp_cutoff" | "ohmic" => Ok(BathKind::OhmicSharpCutoff),
            _ => Err(BathError::Cache(format!("unknown bath kind {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BathSpec {
    pub kind: BathKind,
    pub alpha: f64,
    pub omega_c: f64,
    pub temperature: f64,
}

/// Below this value of `|ω_c τ|` the closed form loses digits to
/// cancellation and the Taylor series is used instead.
const SERIES_THRESHOLD: f64 = 0.1;

impl BathSpec {
    pub fn new(kind: BathKind, alpha: f64, omega_c: f64, temperature: f64) -> Result<Self, BathError> {
        if !(alpha >= 0.0 && alpha.is_finite()) {
            return Err(BathError::InvalidParameter { name: "alpha", value: alpha });
        }
        if !(omega_c > 0.0 && omega_c.is_finite()) {
            return Err(BathError::InvalidParameter { name: "omega_c", value: omega_c });
        }
        if !(temperature >= 0.0 && temperature.is_finite()) {
            return Err(BathError::InvalidParameter {
                name: "temperature",
                value: temperature,
            });
        }
        Ok(Self {
            kind,
            alpha,
            omega_c,
            temperature,
        })
    }

    /// Zero-temperature Ohmic bath with a sharp cutoff.
    pub fn ohmic(alpha: f64, omega_c: f64) -> Result<Self, BathError> {
        Self::new(BathKind::OhmicSharpCutoff, alpha, omega_c, 0.0)
    }

    pub fn spectral_density(&self, omega: f64) -> f64 {
        spectral_density(self, omega)
    }

    pub fn correlation(&self, tau: f64) -> Result<C64, BathError> {
        correlation(self, tau)
    }

    pub fn tabulate(&self, dt: f64, n_steps: usize) -> Result<CorrelationTable, BathError> {
        tabulate(self, dt, n_steps)
    }

    pub fn laplace_correlation(&self, s: C64) -> Result<C64, BathError> {
        laplace_correlation(self, s)
    }
}

/// `J(ω) = 2παω θ(ω) θ(ω_c − ω)`.
pub fn spectral_density(spec: &BathSpec, omega: f64) -> f64 {
    match spec.kind {
        BathKind::OhmicSharpCutoff => {
            if omega > 0.0 && omega < spec.omega_c {
                2.0 * std::f64::consts::PI * spec.alpha * omega
            } else {
                0.0
            }
        }
    }
}

/// Zero-temperature `Γ(τ)` for the Ohmic sharp-cutoff bath.
fn ohmic_zero_temperature(alpha: f64, omega_c: f64, tau: f64) -> C64 {
    let x = omega_c * tau;
    if x.abs() < SERIES_THRESHOLD {
        // (α/2) Σ_k (−iτ)^k ω_c^{k+2} / (k! (k+2))
        let mut sum = ZERO;
        let mut power = C64::new(1.0, 0.0); // (−ix)^k / k!
        for k in 0..40 {
            let term = power / (k as f64 + 2.0);
            sum += term;
            if term.norm() < 1e-18 * sum.norm() {
                break;
            }
            power *= C64::new(0.0, -x) / (k as f64 + 1.0);
        }
        sum * (0.5 * alpha * omega_c * omega_c)
    } else {
        let phase = C64::new(0.0, -x).exp();
        (phase * C64::new(1.0, x) - 1.0) * (0.5 * alpha / (tau * tau))
    }
}

/// `Γ(τ)`; negative arguments are served as `Γ(−τ)*`.
pub fn correlation(spec: &BathSpec, tau: f64) -> Result<C64, BathError> {
    if tau < 0.0 {
        return correlation(spec, -tau).map(|z| z.conj());
    }
    match spec.kind {
        BathKind::OhmicSharpCutoff => {
            let zero_t = ohmic_zero_temperature(spec.alpha, spec.omega_c, tau);
            if spec.temperature == 0.0 || spec.alpha == 0.0 {
                return Ok(zero_t);
            }
            // Thermal part: α ∫₀^{ω_c} ω n(ω) cos(ωτ) dω, real.
            let temp = spec.temperature;
            let integrand = |w: f64| {
                let occ_w = if w == 0.0 { temp } else { w / (w / temp).exp_m1() };
                occ_w * (w * tau).cos()
            };
            let r = quad::integrate(integrand, 0.0, spec.omega_c, 1e-15, 1e-12, 20_000);
            if !r.converged {
                return Err(BathError::Quadrature {
                    tau,
                    achieved: r.error,
                });
            }
            Ok(zero_t + C64::new(spec.alpha * r.value, 0.0))
        }
    }
}

/// `∫₀^∞ e^{−sτ} Γ(τ) dτ` for `Re s ≥ 0`, zero temperature only:
///
/// ```text
/// (α/2) ∫₀^{ω_c} ω/(s + iω) dω = −(α/2)[iω_c − s(ln(s + iω_c) − ln s)]
/// ```
///
/// On the imaginary axis this is the boundary value from `Re s > 0`.
pub fn laplace_correlation(spec: &BathSpec, s: C64) -> Result<C64, BathError> {
    if spec.temperature != 0.0 {
        return Err(BathError::Unsupported(
            "closed-form Laplace transform is only available at zero temperature",
        ));
    }
    if !(s.re >= 0.0) || !s.im.is_finite() {
        return Err(BathError::InvalidParameter { name: "Re s", value: s.re });
    }
    let wc = spec.omega_c;
    let log_term = if s == ZERO {
        ZERO
    } else {
        s * ((s + C64::new(0.0, wc)).ln() - s.ln())
    };
    Ok((C64::new(0.0, wc) - log_term) * (-0.5 * spec.alpha))
}

/// `Γ(τ_n)` for `τ_n = n·dt`, `n = 0..=N`.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationTable {
    dt: f64,
    values: Vec<C64>,
    spec: BathSpec,
}

pub fn tabulate(spec: &BathSpec, dt: f64, n_steps: usize) -> Result<CorrelationTable, BathError> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(BathError::InvalidStep(dt));
    }
    let values = (0..=n_steps)
        .map(|n| correlation(spec, n as f64 * dt))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(CorrelationTable {
        dt,
        values,
        spec: *spec,
    })
}

impl CorrelationTable {
    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn spec(&self) -> &BathSpec {
        &self.spec
    }

    pub fn values(&self) -> &[C64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Number of steps covered (`len − 1`).
    pub fn n_steps(&self) -> usize {
        self.values.len().saturating_sub(1)
    }

    pub fn get(&self, n: usize) -> Option<C64> {
        self.values.get(n).copied()
    }

    /// Bath correlation time: the smallest tabulated `τ` with
    /// `|Γ(τ)| < fraction·Γ(0)`.
    pub fn correlation_time(&self, fraction: f64) -> Option<f64> {
        let g0 = self.values.first()?.norm();
        self.values
            .iter()
            .position(|z| z.norm() < fraction * g0)
            .map(|n| n as f64 * self.dt)
    }

    /// Writes the table as CSV with a `# key = value` header block.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "# kind = ohmic_sharp_cutoff")?;
        writeln!(w, "# alpha = {:e}", self.spec.alpha)?;
        writeln!(w, "# omega_c = {:e}", self.spec.omega_c)?;
        writeln!(w, "# temperature = {:e}", self.spec.temperature)?;
        writeln!(w, "# dt = {:e}", self.dt)?;
        writeln!(w, "tau,re_gamma,im_gamma")?;
        for (n, z) in self.values.iter().enumerate() {
            writeln!(w, "{:e},{:e},{:e}", n as f64 * self.dt, z.re, z.im)?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self, BathError> {
        let mut header = std::collections::HashMap::new();
        let mut values = Vec::new();
        let mut saw_columns = false;
        for line in r.lines() {
            let line = line.map_err(|e| BathError::Cache(e.to_string()))?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                let (k, v) = rest
                    .split_once('=')
                    .ok_or_else(|| BathError::Cache(format!("bad header line {line:?}")))?;
                header.insert(k.trim().to_string(), v.trim().to_string());
                continue;
            }
            if !saw_columns {
                if line != "tau,re_gamma,im_gamma" {
                    return Err(BathError::Cache(format!("unexpected column header {line:?}")));
                }
                saw_columns = true;
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 3 {
                return Err(BathError::Cache(format!("expected 3 columns in {line:?}")));
            }
            let parse = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| BathError::Cache(format!("{s:?}: {e}")))
            };
            values.push(C64::new(parse(fields[1])?, parse(fields[2])?));
        }
        let num = |k: &str| -> Result<f64, BathError> {
            header
                .get(k)
                .ok_or_else(|| BathError::Cache(format!("missing header {k}")))?
                .parse::<f64>()
                .map_err(|e| BathError::Cache(format!("{k}: {e}")))
        };
        let kind = header
            .get("kind")
            .map(|s| s.parse())
            .transpose()?
            .unwrap_or(BathKind::OhmicSharpCutoff);
        let spec = BathSpec::new(kind, num("alpha")?, num("omega_c")?, num("temperature")?)?;
        let dt = num("dt")?;
        if !(dt > 0.0) {
            return Err(BathError::InvalidStep(dt));
        }
        if values.is_empty() {
            return Err(BathError::Cache("no data rows".into()));
        }
        Ok(Self { dt, values, spec })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn spec(alpha: f64) -> BathSpec {
        BathSpec::ohmic(alpha, 1.0).unwrap()
    }

    #[test]
    fn laplace_transform_matches_quadrature() {
        let b = BathSpec::ohmic(0.3, 1.5).unwrap();
        for s in [C64::new(0.4, 0.0), C64::new(0.2, 0.7), C64::new(0.5, -2.0)] {
            let re = quad::integrate(|t| ((-s * t).exp() * b.correlation(t).unwrap()).re, 0.0, 120.0, 1e-13, 1e-12, 50_000);
            let im = quad::integrate(|t| ((-s * t).exp() * b.correlation(t).unwrap()).im, 0.0, 120.0, 1e-13, 1e-12, 50_000);
            let exact = b.laplace_correlation(s).unwrap();
            assert!((C64::new(re.value, im.value) - exact).norm() < 1e-9, "{s}: {exact}");
        }
        // large-s behaviour Γ(0)/s
        let s = C64::new(1e4, 0.0);
        let g = b.laplace_correlation(s).unwrap();
        assert!((g * s - C64::new(0.3 * 1.5 * 1.5 / 4.0, 0.0)).norm() < 1e-3);
    }

    #[test]
    fn laplace_transform_on_imaginary_axis_is_boundary_value() {
        let b = spec(0.2);
        for w in [-0.3, 0.1, 0.0] {
            let on = b.laplace_correlation(C64::new(0.0, w)).unwrap();
            let near = b.laplace_correlation(C64::new(1e-12, w)).unwrap();
            assert!((on - near).norm() < 1e-9);
        }
        // Re part at s = −iω is half the spectral weight: J(ω)/4 for 0 < ω < ω_c
        let s = b.laplace_correlation(C64::new(0.0, -0.4)).unwrap();
        assert!((s.re - 0.25 * b.spectral_density(0.4)).abs() < 1e-12);
        assert!(b.laplace_correlation(C64::new(-0.1, 0.0)).is_err());
        let hot = BathSpec::new(BathKind::OhmicSharpCutoff, 0.1, 1.0, 0.2).unwrap();
        assert!(hot.laplace_correlation(C64::new(1.0, 0.0)).is_err());
    }

    #[test]
    fn spectral_density_values() {
        let s = spec(0.1);
        assert!((s.spectral_density(0.5) - 0.1 * PI).abs() < 1e-15);
        assert_eq!(s.spectral_density(1.5), 0.0);
        assert_eq!(s.spectral_density(-0.1), 0.0);
    }

    #[test]
    fn rejects_invalid_parameters() {
        assert!(BathSpec::ohmic(-0.1, 1.0).is_err());
        assert!(BathSpec::ohmic(0.1, 0.0).is_err());
        assert!(BathSpec::new(BathKind::OhmicSharpCutoff, 0.1, 1.0, -1.0).is_err());
        assert!(matches!(spec(0.1).tabulate(0.0, 3), Err(BathError::InvalidStep(_))));
    }

    #[test]
    fn zero_lag_value() {
        // (1/4π) ∫ J = α ω_c² / 4
        let g0 = spec(0.3).correlation(0.0).unwrap();
        assert!((g0.re - 0.075).abs() < 1e-15);
        assert!(g0.im.abs() < 1e-14 * g0.re);
    }

    #[test]
    fn series_and_closed_form_agree_at_threshold() {
        let s = spec(1.0);
        for &x in &[0.0999, 0.1001, 0.05, 0.2] {
            let a = ohmic_zero_temperature(1.0, 1.0, x);
            // direct closed form at these lags has ~1e-14 relative cancellation error
            let phase = C64::new(0.0, -x).exp();
            let b = (phase * C64::new(1.0, x) - 1.0) * (0.5 / (x * x));
            assert!((a - b).norm() < 1e-12, "x={x}");
            assert_eq!(s.correlation(x).unwrap(), a);
        }
    }

    #[test]
    fn conjugate_symmetry() {
        let s = spec(0.2);
        for &t in &[0.01, 0.7, 3.0, 25.0] {
            assert_eq!(s.correlation(-t).unwrap(), s.correlation(t).unwrap().conj());
        }
    }

    #[test]
    fn single_entry_and_zero_coupling_tables() {
        let t = spec(0.1).tabulate(0.1, 0).unwrap();
        assert_eq!(t.len(), 1);
        assert!((t.values()[0].re - 0.025).abs() < 1e-16);
        let t = spec(0.0).tabulate(0.3, 50).unwrap();
        assert!(t.values().iter().all(|z| *z == ZERO));
    }

    #[test]
    fn refined_table_downsamples_to_coarse() {
        let s = spec(0.4);
        let coarse = s.tabulate(0.2, 40).unwrap();
        let fine = s.tabulate(0.1, 80).unwrap();
        for (n, z) in coarse.values().iter().enumerate() {
            // Both tables evaluate the same grid points; the multiplication n·dt
            // is identical in floating point for these steps.
            let zf = fine.values()[2 * n];
            assert!((z - zf).norm() <= 1e-15 * z.norm().max(1e-300), "n={n}");
        }
    }

    #[test]
    fn correlation_time_is_first_drop() {
        let t = spec(0.1).tabulate(0.5, 2000).unwrap();
        let tau_b = t.correlation_time(0.01).unwrap();
        let g0 = t.values()[0].norm();
        let n = (tau_b / 0.5).round() as usize;
        assert!(t.values()[n].norm() < 0.01 * g0);
        assert!(t.values()[..n].iter().all(|z| z.norm() >= 0.01 * g0));
    }

    #[test]
    fn thermal_correlation_reduces_to_zero_temperature() {
        let cold = BathSpec::new(BathKind::OhmicSharpCutoff, 0.2, 1.0, 1e-4).unwrap();
        let z = spec(0.2);
        for &t in &[0.0, 0.5, 4.0] {
            let d = cold.correlation(t).unwrap() - z.correlation(t).unwrap();
            assert!(d.norm() < 1e-8);
        }
    }

    #[test]
    fn thermal_zero_lag_matches_coth_integral() {
        // Re Γ(0) = (α/2) ∫ ω coth(ω/2T) dω, imaginary part unchanged.
        let s = BathSpec::new(BathKind::OhmicSharpCutoff, 0.2, 1.0, 0.5).unwrap();
        let g = s.correlation(0.0).unwrap();
        let r = quad::integrate(|w| if w == 0.0 { 1.0 } else { w / (w / 1.0).tanh() }, 0.0, 1.0, 1e-15, 1e-14, 100);
        assert!((g.re - 0.1 * r.value).abs() < 1e-12);
        assert!(g.im.abs() < 1e-15);
    }

    #[test]
    fn csv_cache_round_trip() {
        let t = BathSpec::new(BathKind::OhmicSharpCutoff, 0.25, 1.0, 0.0)
            .unwrap()
            .tabulate(0.6283185307179586, 12)
            .unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.contains("tau,re_gamma,im_gamma"));
        assert!(text.contains("# alpha = "));
        let back = CorrelationTable::read_csv(&buf[..]).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn csv_cache_rejects_missing_header() {
        let text = "tau,re_gamma,im_gamma\n0,1,0\n";
        assert!(matches!(
            CorrelationTable::read_csv(text.as_bytes()),
            Err(BathError::Cache(_))
        ));
    }
}
