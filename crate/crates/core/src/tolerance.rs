//! Numerical tolerances shared across the crate.

/// Mixed absolute/relative LP tolerance.
pub const TAU_LP: f64 = 1e-8;
/// Geometric classification against the hull of the target support.
pub const TAU_GEOM: f64 = 1e-9;
/// Smallest cross mass that still counts as "transported" for irreducibility.
pub const TAU_IRR: f64 = 1e-10;
/// Threshold on the L(psi) residual for accepting an optimizing sequence.
pub const TOL_OPT: f64 = 1e-6;
/// Allowed undershoot in the finite-n liminf surrogate.
pub const TOL_LIMINF: f64 = 1e-6;
/// Final measure-metric threshold for convergence in measure.
pub const TOL_L0: f64 = 1e-4;
/// Final L1 threshold when the source support sits inside the interior.
pub const TOL_L1: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub lp: f64,
    pub geom: f64,
    pub irr: f64,
    pub opt: f64,
    pub liminf: f64,
    pub l0: f64,
    pub l1: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            lp: TAU_LP,
            geom: TAU_GEOM,
            irr: TAU_IRR,
            opt: TOL_OPT,
            liminf: TOL_LIMINF,
            l0: TOL_L0,
            l1: TOL_L1,
        }
    }
}

impl Tolerances {
    /// Applies a `name=value` override. Returns false for unknown names.
    pub fn set(&mut self, name: &str, value: f64) -> bool {
        let slot = match name {
            "lp" => &mut self.lp,
            "geom" => &mut self.geom,
            "irr" => &mut self.irr,
            "opt" => &mut self.opt,
            "liminf" => &mut self.liminf,
            "l0" => &mut self.l0,
            "l1" => &mut self.l1,
            _ => return false,
        };
        *slot = value;
        true
    }

    pub fn entries(&self) -> [(&'static str, f64); 7] {
        [
            ("geom", self.geom),
            ("irr", self.irr),
            ("l0", self.l0),
            ("l1", self.l1),
            ("liminf", self.liminf),
            ("lp", self.lp),
            ("opt", self.opt),
        ]
    }
}
