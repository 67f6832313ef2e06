//! L^p ratio scans over dyadic frequency bands.
//!
//! For each band k and exponent p the scan records
//! ratio_k = ‖u(t)‖_{L^p} / ‖⟨D⟩^{sα} u₀‖_{L^p} with α = (n−1)|1/p − 1/2| and
//! a scale factor s (1 for the boundedness check, below 1 to expose the
//! loss). Boundedness shows up as a small spread max_k ratio_k / min_k ratio_k.

use std::f64::consts::PI;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::grid::{Grid, SpectralField, VectorField};
use crate::propagator::{Propagator, PropagatorError};

/// Spread bound accepted as bounded.
pub const SPREAD_BOUND: f64 = 4.0;

/// (n − 1)|1/p − 1/2|.
pub fn lp_alpha(n: usize, p: f64) -> f64 {
    (n as f64 - 1.0) * (1.0 / p - 0.5).abs()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Packet {
    /// e^{i2^k x·ω} times a Gaussian bump, ω at angle `angle` from the x₁ axis.
    Plane { angle: f64 },
    /// A band-limited point mass at the centre, propagated back by the diagonal part for time t.
    Focusing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LpScanParams {
    pub p_values: Vec<f64>,
    pub bands: Vec<u32>,
    pub t: f64,
    /// s in ⟨D⟩^{sα}.
    pub alpha_scale: f64,
    pub packet: Packet,
    /// Gaussian bump width.
    pub width: f64,
    /// Component carrying the data.
    pub component: usize,
    /// Picard depth and quadrature nodes.
    pub levels: usize,
    pub nodes: usize,
}

impl Default for LpScanParams {
    fn default() -> Self {
        LpScanParams {
            p_values: vec![4.0, 4.0 / 3.0],
            bands: vec![3, 4, 5],
            t: 0.5,
            alpha_scale: 1.0,
            packet: Packet::Plane { angle: 0.3 },
            width: 0.6,
            component: 0,
            levels: 4,
            nodes: 64,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LpRow {
    pub p: f64,
    pub band: u32,
    pub alpha: f64,
    pub norm_out: f64,
    pub norm_in: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct LpSpread {
    pub p: f64,
    pub spread: f64,
    /// ratio at the last band over ratio at the first.
    pub growth: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct LpScan {
    pub rows: Vec<LpRow>,
    pub spreads: Vec<LpSpread>,
    pub params: LpScanParams,
}

/// Keeps the modes with 2^{k−1} ≤ |k|_∞ < 2^{k+1}.
fn band_limit(u: &SpectralField, band: u32) -> SpectralField {
    let (lo, hi) = (2f64.powi(band as i32 - 1), 2f64.powi(band as i32 + 1));
    u.map_spectral(|k, c| {
        let r = k.iter().fold(0.0f64, |a, &v| a.max(v.abs() as f64));
        if r >= lo && r < hi {
            c
        } else {
            C64::default()
        }
    })
}

/// Band-limited plane packet centred in the torus.
pub fn plane_packet(grid: &Grid, band: u32, angle: f64, width: f64) -> SpectralField {
    let freq = 2f64.powi(band as i32);
    let dir: Vec<f64> = match grid.dim() {
        1 => vec![1.0],
        _ => vec![angle.cos(), angle.sin()],
    };
    let raw = SpectralField::from_fn(grid, |x| {
        let r2: f64 = x.iter().map(|v| (v - PI).powi(2)).sum();
        let phase: f64 = x.iter().zip(&dir).map(|(a, w)| a * w).sum::<f64>() * freq;
        C64::from_polar((-r2 / (2.0 * width * width)).exp(), phase)
    });
    band_limit(&raw, band)
}

/// Band-limited point mass at the centre of the torus.
pub fn point_packet(grid: &Grid, band: u32) -> SpectralField {
    let raw = SpectralField::from_spectral(
        grid,
        grid.modes()
            .iter()
            .map(|k| C64::from_polar(1.0, -k.iter().map(|&v| v as f64 * PI).sum::<f64>()))
            .collect(),
    )
    .expect("one coefficient per mode");
    band_limit(&raw, band)
}

fn initial_data(prop: &Propagator, band: u32, p: &LpScanParams) -> Result<VectorField, PropagatorError> {
    let grid = prop.grid();
    if p.component >= prop.size() {
        return Err(PropagatorError::Shape(format!("component {} of a {}-component system", p.component, prop.size())));
    }
    if 2usize.pow(band + 1) > grid.nyquist() {
        return Err(PropagatorError::Band { band, nyquist: grid.nyquist() });
    }
    let mut comps = vec![SpectralField::zeros(grid); prop.size()];
    comps[p.component] = match p.packet {
        Packet::Plane { angle } => plane_packet(grid, band, angle, p.width),
        Packet::Focusing => point_packet(grid, band),
    };
    let w = VectorField::new(comps).expect("same grid");
    match p.packet {
        Packet::Plane { .. } => Ok(w),
        Packet::Focusing => prop.half_wave(-p.t, &w),
    }
}

/// The ratio table over bands and exponents.
pub fn lp_scan(prop: &Propagator, p: &LpScanParams) -> Result<LpScan, PropagatorError> {
    let n = prop.grid().dim();
    let mut rows = Vec::new();
    for &band in &p.bands {
        let u0 = initial_data(prop, band, p)?;
        let u = prop.picard_solve(&u0, p.t, p.levels, p.nodes)?.u;
        for &lp in &p.p_values {
            let alpha = p.alpha_scale * lp_alpha(n, lp);
            let norm_out = u.lp_norm(lp);
            let norm_in = u0.bessel_potential(alpha).lp_norm(lp);
            rows.push(LpRow { p: lp, band, alpha, norm_out, norm_in, ratio: norm_out / norm_in });
        }
    }
    let spreads = p
        .p_values
        .iter()
        .map(|&lp| {
            let r: Vec<f64> = rows.iter().filter(|row| row.p == lp).map(|row| row.ratio).collect();
            let max = r.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let min = r.iter().copied().fold(f64::INFINITY, f64::min);
            let spread = max / min;
            let growth = r.last().copied().unwrap_or(f64::NAN) / r.first().copied().unwrap_or(f64::NAN);
            LpSpread { p: lp, spread, growth, pass: spread <= SPREAD_BOUND }
        })
        .collect();
    Ok(LpScan { rows, spreads, params: p.clone() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::characteristics::RootSystem;
    use crate::propagator::{PropagatorParams, SystemSpec};
    use crate::symdsl::parse;

    #[test]
    fn alpha_in_two_dimensions() {
        assert_eq!(lp_alpha(2, 4.0), 0.25);
        assert!((lp_alpha(2, 4.0 / 3.0) - 0.25).abs() < 1e-15);
        assert_eq!(lp_alpha(1, 4.0), 0.0);
        assert_eq!(lp_alpha(3, 2.0), 0.0);
    }

    #[test]
    fn packets_live_in_their_band() {
        let g = Grid::square(64).unwrap();
        for u in [plane_packet(&g, 3, 0.3, 0.6), point_packet(&g, 3)] {
            assert!(u.l2_norm() > 0.0);
            for (k, c) in g.modes().iter().zip(u.spec()) {
                let r = k.iter().fold(0, |a: i64, v| a.max(v.abs()));
                if !(4..16).contains(&r) {
                    assert_eq!(*c, C64::default());
                }
            }
        }
    }

    #[test]
    fn focusing_data_refocuses() {
        let g = Grid::square(32).unwrap();
        let roots = RootSystem::distinct(vec![parse("norm_xi", 2).unwrap()]);
        let prop = Propagator::new(SystemSpec::free(roots, g.clone(), 1.0), PropagatorParams::default()).unwrap();
        let p = LpScanParams { packet: Packet::Focusing, bands: vec![2, 3], p_values: vec![4.0], ..Default::default() };
        let scan = lp_scan(&prop, &p).unwrap();
        for (row, band) in scan.rows.iter().zip([2, 3]) {
            let w = point_packet(&g, band);
            assert!((row.norm_out - w.lp_norm(4.0)).abs() <= 1e-9 * row.norm_out);
        }
        // the point mass concentrates: L⁴ grows with the band faster than the spread-out data
        assert!(scan.spreads[0].growth > 1.0);
    }
}
