//! Conservation laws, numerical fluxes, Harten coefficients and Lipschitz bounds.
//!
//! Every state is a two-component vector. Burgers uses component 0 and keeps
//! component 1 at exactly zero; shallow water stores (h, q).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type State = [f64; 2];

/// Gravitational constant for the shallow water equations.
pub const G: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConservationLaw {
    Burgers,
    ShallowWater,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FluxKind {
    Llf,
    Godunov,
}

pub fn flux_burgers(u: f64) -> f64 {
    0.5 * u * u
}

pub fn flux_swe(h: f64, q: f64) -> Result<(f64, f64)> {
    if !(h > 0.0) {
        return Err(Error::Inadmissible { cell: usize::MAX, detail: format!("depth h = {h}") });
    }
    Ok((q, q * q / h + 0.5 * G * h * h))
}

impl ConservationLaw {
    pub fn n_vars(self) -> usize {
        match self {
            ConservationLaw::Burgers => 1,
            ConservationLaw::ShallowWater => 2,
        }
    }

    pub fn is_scalar(self) -> bool {
        self.n_vars() == 1
    }

    pub fn admissible(self, u: &State) -> bool {
        match self {
            ConservationLaw::Burgers => u[0].is_finite() && u[1] == 0.0,
            ConservationLaw::ShallowWater => u[0] > 0.0 && u[0].is_finite() && u[1].is_finite(),
        }
    }

    pub fn flux(self, u: &State) -> Result<State> {
        match self {
            ConservationLaw::Burgers => Ok([flux_burgers(u[0]), 0.0]),
            ConservationLaw::ShallowWater => {
                let (a, b) = flux_swe(u[0], u[1])?;
                Ok([a, b])
            }
        }
    }

    /// `|Lambda|(u)`: |u| for Burgers, |q/h| + sqrt(g h) for shallow water.
    pub fn wave_speed(self, u: &State) -> Result<f64> {
        match self {
            ConservationLaw::Burgers => Ok(u[0].abs()),
            ConservationLaw::ShallowWater => {
                if !(u[0] > 0.0) {
                    return Err(Error::Inadmissible { cell: usize::MAX, detail: format!("depth h = {}", u[0]) });
                }
                Ok((u[1] / u[0]).abs() + (G * u[0]).sqrt())
            }
        }
    }
}

pub fn llf_flux(law: ConservationLaw, ul: &State, ur: &State) -> Result<State> {
    let fl = law.flux(ul)?;
    let fr = law.flux(ur)?;
    let alpha = law.wave_speed(ul)?.max(law.wave_speed(ur)?);
    Ok([
        0.5 * (fl[0] + fr[0]) - 0.5 * alpha * (ur[0] - ul[0]),
        0.5 * (fl[1] + fr[1]) - 0.5 * alpha * (ur[1] - ul[1]),
    ])
}

/// Exact Godunov flux of Burgers' equation: min of f over [ul, ur] or max over [ur, ul].
pub fn godunov_flux_scalar(law: ConservationLaw, ul: &State, ur: &State) -> Result<State> {
    if law != ConservationLaw::Burgers {
        return Err(Error::GodunovOnSystem);
    }
    let (a, b) = (ul[0], ur[0]);
    let f = if a <= b { flux_burgers(0.0f64.clamp(a, b)) } else { flux_burgers(a).max(flux_burgers(b)) };
    Ok([f, 0.0])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NumericalFlux {
    pub law: ConservationLaw,
    pub kind: FluxKind,
}

impl NumericalFlux {
    pub fn new(law: ConservationLaw, kind: FluxKind) -> Result<Self> {
        if kind == FluxKind::Godunov && !law.is_scalar() {
            return Err(Error::GodunovOnSystem);
        }
        Ok(Self { law, kind })
    }

    pub fn evaluate(&self, ul: &State, ur: &State) -> Result<State> {
        match self.kind {
            FluxKind::Llf => llf_flux(self.law, ul, ur),
            FluxKind::Godunov => godunov_flux_scalar(self.law, ul, ur),
        }
    }

    /// Worst-case ratio of the flux's divided differences to the local wave speed.
    /// Rusanov's dissipation coefficient varies with the states, which lets its
    /// divided differences reach twice the wave speed.
    pub fn lipschitz_factor(&self) -> f64 {
        match (self.law, self.kind) {
            (ConservationLaw::Burgers, FluxKind::Llf) => 2.0,
            _ => 1.0,
        }
    }
}

/// `(K1, K2)` for a face: the larger wave speed over `dx`.
pub fn lipschitz_k(flux: &NumericalFlux, ul: &State, ur: &State, dx: f64) -> Result<(f64, f64)> {
    let law = flux.law;
    let k = law.wave_speed(ul)?.max(law.wave_speed(ur)?) / dx;
    Ok((k, k))
}

fn triple_speed(law: ConservationLaw, a: &State, b: &State, c: &State) -> Result<f64> {
    Ok(law.wave_speed(a)?.max(law.wave_speed(b)?).max(law.wave_speed(c)?))
}

/// Harten's divided differences for cell `j` of a scalar law:
///
/// `C = (F(a, c) - F(b, c)) / (dx (b - a))`, `D = (F(a, b) - F(a, c)) / (dx (c - b))`
///
/// with `(a, b, c) = (U_{j-1}, U_j, U_{j+1})`. A vanishing jump falls back to the
/// wave-speed bound of the triple, negative for C and positive for D.
///
/// A monotone flux keeps the exact quotients in `[-L, 0]` and `[0, L]` with `L` its
/// Lipschitz constant over the triple. Jumps of a few ulps leave only rounding noise
/// in the quotient, so the results are clamped to those ranges.
pub fn harten_coefficients(a: &State, b: &State, c: &State, dx: f64, flux: &NumericalFlux) -> Result<(f64, f64)> {
    let fallback = triple_speed(flux.law, a, b, c)? / dx;
    let (cc, dd) = harten_with(a[0], b[0], c[0], dx, fallback, |l, r| Ok(flux.evaluate(&[l, 0.0], &[r, 0.0])?[0]))?;
    let lip = flux.lipschitz_factor() * fallback;
    Ok((cc.clamp(-lip, 0.0), dd.clamp(0.0, lip)))
}

/// Harten's divided differences for an arbitrary scalar two-point flux.
pub fn harten_with(
    a: f64,
    b: f64,
    c: f64,
    dx: f64,
    fallback: f64,
    flux: impl Fn(f64, f64) -> Result<f64>,
) -> Result<(f64, f64)> {
    let cc = if b == a { -fallback } else { (flux(a, c)? - flux(b, c)?) / (dx * (b - a)) };
    let dd = if c == b { fallback } else { (flux(a, b)? - flux(a, c)?) / (dx * (c - b)) };
    Ok((cc, dd))
}

/// Per-cell rate bounds `(kc, kd)` used for CFL control: `kc >= -C`, `kd >= D`,
/// both at least the wave-speed bound of the triple. Systems use the wave-speed bound alone.
pub fn cell_bounds(a: &State, b: &State, c: &State, dx: f64, flux: &NumericalFlux) -> Result<(f64, f64)> {
    let lip = triple_speed(flux.law, a, b, c)? / dx;
    if !flux.law.is_scalar() {
        return Ok((lip, lip));
    }
    let (cc, dd) = harten_coefficients(a, b, c, dx, flux)?;
    Ok((lip.max(-cc), lip.max(dd)))
}

/// Largest minimum timestep for which every CFL step is at least one tick,
/// given the largest wave speed reachable from the initial data.
pub fn dt_min_bound(flux: &NumericalFlux, dx_min: f64, max_speed: f64) -> f64 {
    if max_speed <= 0.0 {
        return f64::INFINITY;
    }
    dx_min / (2.0 * flux.lipschitz_factor() * max_speed)
}

pub fn total_variation(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut it = values.into_iter();
    let Some(mut prev) = it.next() else { return 0.0 };
    let mut tv = 0.0;
    for v in it {
        tv += (v - prev).abs();
        prev = v;
    }
    tv
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const B: ConservationLaw = ConservationLaw::Burgers;
    const S: ConservationLaw = ConservationLaw::ShallowWater;

    fn s(u: f64) -> State {
        [u, 0.0]
    }

    fn llf() -> NumericalFlux {
        NumericalFlux::new(B, FluxKind::Llf).unwrap()
    }

    fn god() -> NumericalFlux {
        NumericalFlux::new(B, FluxKind::Godunov).unwrap()
    }

    #[test]
    fn point_fluxes() {
        assert_eq!(flux_burgers(0.0), 0.0);
        assert_eq!(flux_burgers(1.0), 0.5);
        assert_eq!(flux_burgers(-2.0), 2.0);
        assert_eq!(flux_swe(1.0, 0.0).unwrap(), (0.0, 0.5));
        assert_eq!(flux_swe(1.0, 1.0).unwrap(), (1.0, 1.5));
        assert!(flux_swe(0.0, 0.0).is_err());
    }

    #[test]
    fn wave_speeds() {
        assert_eq!(B.wave_speed(&s(1.0)).unwrap(), 1.0);
        assert_eq!(S.wave_speed(&[1.0, 0.0]).unwrap(), 1.0);
        let v = S.wave_speed(&[1.0 / 16.1, 0.0]).unwrap();
        assert!((v - (1.0f64 / 16.1).sqrt()).abs() < 1e-15);
        assert!((v - 0.24922).abs() < 1e-5);
        assert!(S.wave_speed(&[0.0, 0.0]).is_err());
    }

    #[test]
    fn llf_examples() {
        assert_eq!(llf_flux(B, &s(0.3), &s(0.3)).unwrap(), [0.045, 0.0]);
        assert_eq!(llf_flux(B, &s(1.0), &s(0.0)).unwrap()[0], 0.75);
        assert_eq!(llf_flux(S, &[1.0, 0.0], &[1.0, 0.0]).unwrap(), [0.0, 0.5]);
    }

    #[test]
    fn godunov_examples() {
        assert_eq!(godunov_flux_scalar(B, &s(0.7), &s(0.7)).unwrap()[0], flux_burgers(0.7));
        assert_eq!(godunov_flux_scalar(B, &s(1.0), &s(0.0)).unwrap()[0], 0.5);
        assert_eq!(godunov_flux_scalar(B, &s(-1.0), &s(1.0)).unwrap()[0], 0.0);
        assert!(godunov_flux_scalar(S, &[1.0, 0.0], &[1.0, 0.0]).is_err());
        assert!(NumericalFlux::new(S, FluxKind::Godunov).is_err());
    }

    #[test]
    fn harten_examples() {
        // linear advection with the upwind flux F(a, b) = a
        let (cc, dd) = harten_with(0.2, 0.7, 0.1, 0.1, 10.0, |l, _| Ok(l)).unwrap();
        assert!((cc + 10.0).abs() < 1e-12 && dd == 0.0);

        let f = llf();
        let (cc, dd) = harten_coefficients(&s(1.0), &s(0.5), &s(0.0), 1.0, &f).unwrap();
        let ev = |l: f64, r: f64| llf_flux(B, &s(l), &s(r)).unwrap()[0];
        assert_eq!(cc, (ev(1.0, 0.0) - ev(0.5, 0.0)) / (0.5 - 1.0));
        assert_eq!(dd, (ev(1.0, 0.5) - ev(1.0, 0.0)) / (0.0 - 0.5));

        let (cc, dd) = harten_coefficients(&s(0.4), &s(0.4), &s(0.4), 0.5, &f).unwrap();
        assert!(cc <= 0.0 && dd >= 0.0);
        assert_eq!((cc, dd), (-0.8, 0.8));

        let u: f64 = 0.7188636459539056;
        let v = f64::from_bits(u.to_bits() - 1);
        for (a, b, c) in [(u, v, u), (v, u, 0.0), (u, u, v)] {
            let (cc, dd) = harten_coefficients(&s(a), &s(b), &s(c), 1.0, &f).unwrap();
            assert!((-2.0 * u..=0.0).contains(&cc) && (0.0..=2.0 * u).contains(&dd), "{cc} {dd}");
        }
    }

    #[test]
    fn lipschitz_examples() {
        assert_eq!(lipschitz_k(&llf(), &s(1.0), &s(0.0), 0.5).unwrap(), (2.0, 2.0));
        let swe = NumericalFlux::new(S, FluxKind::Llf).unwrap();
        assert_eq!(lipschitz_k(&swe, &[1.0, 0.0], &[1.0, 0.0], 1.0).unwrap(), (1.0, 1.0));
        assert_eq!(lipschitz_k(&god(), &s(0.0), &s(0.0), 0.3).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn total_variation_of_step() {
        assert_eq!(total_variation([1.0, 1.0, 0.0, 0.0]), 1.0);
        assert_eq!(total_variation(std::iter::empty()), 0.0);
    }

    fn exact_riemann_burgers(l: f64, r: f64) -> f64 {
        if l > r {
            let speed = 0.5 * (l + r);
            if speed >= 0.0 {
                flux_burgers(l)
            } else {
                flux_burgers(r)
            }
        } else if l >= 0.0 {
            flux_burgers(l)
        } else if r <= 0.0 {
            flux_burgers(r)
        } else {
            0.0
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn fluxes_are_consistent(u in -5.0f64..5.0, h in 0.01f64..5.0, q in -5.0f64..5.0) {
            let su = s(u);
            prop_assert!((llf().evaluate(&su, &su).unwrap()[0] - flux_burgers(u)).abs() <= 1e-14);
            prop_assert!((god().evaluate(&su, &su).unwrap()[0] - flux_burgers(u)).abs() <= 1e-14);
            let w = [h, q];
            let swe = NumericalFlux::new(S, FluxKind::Llf).unwrap();
            let got = swe.evaluate(&w, &w).unwrap();
            let want = S.flux(&w).unwrap();
            prop_assert!((got[0] - want[0]).abs() <= 1e-14 * want[0].abs().max(1.0));
            prop_assert!((got[1] - want[1]).abs() <= 1e-14 * want[1].abs().max(1.0));
        }

        #[test]
        fn scalar_fluxes_are_monotone(a in -3.0f64..3.0, b in -3.0f64..3.0) {
            let eps = 1e-6;
            for f in [llf(), god()] {
                let base = f.evaluate(&s(a), &s(b)).unwrap()[0];
                let dl = (f.evaluate(&s(a + eps), &s(b)).unwrap()[0] - base) / eps;
                let dr = (f.evaluate(&s(a), &s(b + eps)).unwrap()[0] - base) / eps;
                prop_assert!(dl >= -1e-10, "dF/duL = {dl}");
                prop_assert!(dr <= 1e-10, "dF/duR = {dr}");
            }
        }

        #[test]
        fn godunov_matches_exact_riemann_flux(a in -3.0f64..3.0, b in -3.0f64..3.0) {
            prop_assert_eq!(god().evaluate(&s(a), &s(b)).unwrap()[0], exact_riemann_burgers(a, b));
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(10_000))]

        #[test]
        fn harten_signs(a in -2.0f64..2.0, b in -2.0f64..2.0, c in -2.0f64..2.0, dx in 0.01f64..1.0, godunov in any::<bool>()) {
            let f = if godunov { god() } else { llf() };
            let (cc, dd) = harten_coefficients(&s(a), &s(b), &s(c), dx, &f).unwrap();
            prop_assert!(cc <= 0.0 && dd >= 0.0, "C = {cc}, D = {dd}");
            let (kc, kd) = cell_bounds(&s(a), &s(b), &s(c), dx, &f).unwrap();
            let cap = f.lipschitz_factor() * a.abs().max(b.abs()).max(c.abs()) / dx;
            prop_assert!(kc <= cap * (1.0 + 1e-12) + 1e-12 && kd <= cap * (1.0 + 1e-12) + 1e-12);
        }
    }
}
