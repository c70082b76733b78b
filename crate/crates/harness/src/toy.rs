//! Analytic two-stream shear flow on a decomposed grid.
//!
//! Velocity is a tanh shear layer in x with a time-dependent sinusoidal kick in y:
//!
//! ```text
//! v = (U·tanh((y − c)/w),  A·sin(2πx/Lx)·cos(ωt),  0)
//! ```
//!
//! Both components are independent of their own coordinate, so the flow is
//! divergence-free. The density is a uniform background carrying two modulations,
//! each transported along one axis by the matching velocity component: the x-wave
//! rides the shear profile, the y-wave is displaced by the integrated kick
//! η(x, t) = (A/ω)·sin(2πx/Lx)·sin(ωt). Each wave spans exactly one period of the
//! grid, so its sum over that axis vanishes and the discrete density integral
//! stays at the cell count for every step.
//!
//! Every field value is a closed-form function of (parameters, step, global index):
//! bricks and their guards are filled without talking to neighbours, and replaying
//! a step reproduces it bit for bit.

use insitu_core::field::LocalDomain;
use insitu_core::Real;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToyParams {
    /// Shear speed U of the two streams.
    pub shear_speed: f64,
    /// Width w of the shear layer, in cells.
    pub shear_width: f64,
    /// Amplitude A of the transverse perturbation.
    pub perturbation: f64,
    /// Angular frequency ω of the perturbation.
    pub frequency: f64,
    /// Amplitude of the density wave carried by the shear.
    pub shear_contrast: f64,
    /// Amplitude of the density wave carried by the perturbation.
    pub kick_contrast: f64,
    /// Simulated time per step.
    pub dt: f64,
    /// Selects the wave phases.
    pub seed: u64,
}

impl Default for ToyParams {
    fn default() -> Self {
        Self {
            shear_speed: 1.0,
            shear_width: 4.0,
            perturbation: 0.6,
            frequency: 0.4,
            shear_contrast: 0.5,
            kick_contrast: 0.3,
            dt: 0.5,
            seed: 7,
        }
    }
}

impl ToyParams {
    fn phases(&self) -> [f64; 2] {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        [rng.gen_range(0.0..TAU), rng.gen_range(0.0..TAU)]
    }
}

/// Closed-form fields over a global grid of `size` nodes (node i at position i).
#[derive(Debug, Clone, Copy)]
pub struct ShearFlow {
    params: ToyParams,
    size: [f64; 3],
    phases: [f64; 2],
}

impl ShearFlow {
    pub fn new(params: ToyParams, size: [usize; 3]) -> Self {
        Self {
            params,
            size: size.map(|n| n as f64),
            phases: params.phases(),
        }
    }

    fn center(&self) -> f64 {
        0.5 * self.size[1]
    }

    fn shear(&self, y: f64) -> f64 {
        self.params.shear_speed * ((y - self.center()) / self.params.shear_width).tanh()
    }

    pub fn velocity(&self, p: [f64; 3], t: f64) -> [f64; 3] {
        let p_ = &self.params;
        [
            self.shear(p[1]),
            p_.perturbation * (TAU * p[0] / self.size[0]).sin() * (p_.frequency * t).cos(),
            0.0,
        ]
    }

    /// Transverse displacement accumulated by the kick up to time `t`.
    fn kick_displacement(&self, x: f64, t: f64) -> f64 {
        let p = &self.params;
        if p.frequency == 0.0 {
            return p.perturbation * (TAU * x / self.size[0]).sin() * t;
        }
        p.perturbation / p.frequency * (TAU * x / self.size[0]).sin() * (p.frequency * t).sin()
    }

    pub fn density(&self, p: [f64; 3], t: f64) -> f64 {
        let [x, y, z] = p;
        let par = &self.params;
        let layer = ((y - self.center()) / par.shear_width).cosh().recip().powi(2);
        let depth = 0.5 + 0.5 * (TAU * z / self.size[2]).cos();
        let x_wave = (TAU * (x - self.shear(y) * t) / self.size[0] + self.phases[0]).sin();
        let y_wave = (TAU * (y - self.kick_displacement(x, t)) / self.size[1] + self.phases[1]).sin();
        1.0 + par.shear_contrast * layer * (0.5 + 0.5 * depth) * x_wave + par.kick_contrast * depth * y_wave
    }
}

/// One rank's fields at one step: owned brick plus guard, x fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyState {
    pub step: u64,
    pub params: ToyParams,
    pub global_size: [usize; 3],
    pub domain: LocalDomain,
    pub density: Vec<Real>,
    pub velocity: Vec<[Real; 3]>,
}

impl ToyState {
    pub fn new(params: ToyParams, global_size: [usize; 3], domain: LocalDomain) -> Self {
        Self::at(params, global_size, domain, 0)
    }

    /// The state after `step` steps; a pure function of its arguments.
    pub fn at(params: ToyParams, global_size: [usize; 3], domain: LocalDomain, step: u64) -> Self {
        let flow = ShearFlow::new(params, global_size);
        let t = step as f64 * params.dt;
        let extent = Self::extent_of(&domain);
        let g = domain.guard_width as i64;
        let cells = extent.iter().product();
        let mut density = Vec::with_capacity(cells);
        let mut velocity = Vec::with_capacity(cells);
        for k in 0..extent[2] as i64 {
            for j in 0..extent[1] as i64 {
                for i in 0..extent[0] as i64 {
                    let local = [i - g, j - g, k - g];
                    let p = [0, 1, 2].map(|a| (local[a] + domain.offset[a] as i64) as f64);
                    density.push(flow.density(p, t) as Real);
                    velocity.push(flow.velocity(p, t).map(|c| c as Real));
                }
            }
        }
        Self {
            step,
            params,
            global_size,
            domain,
            density,
            velocity,
        }
    }

    fn extent_of(domain: &LocalDomain) -> [usize; 3] {
        domain.size.map(|n| n + 2 * domain.guard_width)
    }

    /// Storage extent per axis, guard included.
    pub fn extent(&self) -> [usize; 3] {
        Self::extent_of(&self.domain)
    }

    /// Storage index of a brick-local cell index; the guard starts at -guard_width.
    #[inline]
    pub fn index(&self, local: [i64; 3]) -> usize {
        let e = self.extent();
        let g = self.domain.guard_width as i64;
        let [i, j, k] = [0, 1, 2].map(|a| {
            let v = local[a] + g;
            debug_assert!(v >= 0 && (v as usize) < e[a], "index {local:?} outside guarded brick");
            v as usize
        });
        (k * e[1] + j) * e[0] + i
    }

    /// Advances one step. Guards are refilled from the formula, not exchanged.
    pub fn step_toy(&self) -> Self {
        Self::at(self.params, self.global_size, self.domain, self.step + 1)
    }

    /// Sum of density over the owned cells (unit cell volume).
    pub fn density_integral(&self) -> f64 {
        let mut sum = 0.0;
        for k in 0..self.domain.size[2] as i64 {
            for j in 0..self.domain.size[1] as i64 {
                for i in 0..self.domain.size[0] as i64 {
                    sum += self.density[self.index([i, j, k])] as f64;
                }
            }
        }
        sum
    }
}
