//! Invariant suite run by `echo-lab check` and the `property-check` experiment.

use echo_core::gaussian::MetaplecticOp;
use echo_core::symplectic::{
    build_gamma_f, build_vf, det_vf_blocks, lie_path, max_stretch, quadratic_form, random_orthosymplectic,
    random_symmetric, random_symplectic, symplectic_defect, TOL_SYMP_ALGEBRAIC,
};
use echo_core::PhaseVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::table::{flag, num, Table};
use crate::CliError;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub samples: usize,
    /// Largest violation; the check passes when it is at most `tolerance`.
    pub max_defect: f64,
    pub tolerance: f64,
}

impl CheckResult {
    pub fn pass(&self) -> bool {
        self.max_defect <= self.tolerance
    }
}

fn numerical(e: echo_core::EchoError) -> CliError {
    CliError::Numerical(e.to_string())
}

/// Runs every check with `samples` random draws, deterministic in `seed`.
pub fn run_checks(samples: usize, seed: u64) -> Result<Vec<CheckResult>, CliError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draw = |rng: &mut ChaCha8Rng| {
        let d = rng.random_range(1..=3usize);
        let scale = rng.random_range(0.01..1.5);
        random_symplectic(d, rng.random(), scale)
    };
    let mut symp = 0.0f64;
    let mut det_low = 0.0f64;
    let mut block = 0.0f64;
    let mut gamma_sym = 0.0f64;
    let mut gamma_bound = f64::NEG_INFINITY;
    for _ in 0..samples {
        let f = draw(&mut rng).map_err(numerical)?;
        let d = f.dim();
        symp = symp.max(symplectic_defect(f.matrix()).map_err(numerical)?);
        let det = det_vf_blocks(&f);
        det_low = det_low.max(1.0 - det.norm());
        let direct = build_vf(&f).determinant();
        block = block.max((direct - det).norm() / direct.norm().max(1.0));
        let g = build_gamma_f(&f).map_err(numerical)?;
        gamma_sym = gamma_sym.max((&g - g.transpose()).camax() / g.camax().max(1.0));
        let x: Vec<f64> = (0..2 * d).map(|_| rng.random_range(-3.0..3.0)).collect();
        let x2: f64 = x.iter().map(|v| v * v).sum();
        let bound = -x2 / (2.0 * (1.0 + max_stretch(f.matrix())));
        gamma_bound = gamma_bound.max(0.25 * quadratic_form(&g, &x).re - bound);
    }
    let mut orth = 0.0f64;
    for _ in 0..samples {
        let d = rng.random_range(1..=3usize);
        let u = random_orthosymplectic(d, rng.random(), 2.0).map_err(numerical)?;
        orth = orth.max((det_vf_blocks(&u).norm() - 1.0).abs());
    }
    let mut me = f64::NEG_INFINITY;
    let me_samples = samples.div_ceil(10);
    for _ in 0..me_samples {
        let d = rng.random_range(1..=2usize);
        let scale = rng.random_range(0.01..1.0);
        let s = random_symmetric(d, &mut rng, scale);
        let path = lie_path(&s, 64).map_err(numerical)?;
        let f = path.last().expect("non-empty path").clone();
        let op = MetaplecticOp::new(&f, &path).map_err(numerical)?;
        let mut v = || PhaseVector::from_slice(&(0..2 * d).map(|_| rng.random_range(-3.0..3.0)).collect::<Vec<_>>());
        let (x, y) = (v(), v());
        me = me.max(op.matrix_element(&x, &y).norm() - 1.0);
    }
    Ok(vec![
        CheckResult { name: "symplecticity", samples, max_defect: symp, tolerance: TOL_SYMP_ALGEBRAIC },
        CheckResult { name: "det_v_lower_bound", samples, max_defect: det_low, tolerance: 1e-10 },
        CheckResult { name: "det_v_orthogonal_equality", samples, max_defect: orth, tolerance: 1e-10 },
        CheckResult { name: "det_v_block_formula", samples, max_defect: block, tolerance: 1e-9 },
        CheckResult { name: "gamma_symmetry", samples, max_defect: gamma_sym, tolerance: 1e-10 },
        CheckResult { name: "gamma_quadratic_bound", samples, max_defect: gamma_bound, tolerance: 1e-10 },
        CheckResult { name: "matrix_element_bound", samples: me_samples, max_defect: me, tolerance: 1e-12 },
    ])
}

pub fn check_table(results: &[CheckResult]) -> Table {
    let mut t = Table::new(&["check", "samples", "max_defect", "tolerance", "pass"]);
    for r in results {
        t.push(vec![
            r.name.to_string(),
            r.samples.to_string(),
            num(r.max_defect),
            num(r.tolerance),
            flag(r.pass()),
        ]);
    }
    t
}
