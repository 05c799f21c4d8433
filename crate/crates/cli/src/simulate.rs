use bayeslin::equivalence::CommutingFamily;
use bayeslin::problem::{rows_of, AffineOmega, ProblemFile};
use bayeslin::{linalg, scenarios, GeneralLinearDesign, RealMatrix, RealVector};
use clap::{Args, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::report::Failure;
use crate::Context;

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    /// The three-point example with an affine covariance.
    Example,
    /// Rao-structured covariance with a companion pair.
    Rao,
    /// Mixed-effects covariance with a shared prior.
    MixedEffects,
    /// Ring spatial AR(1) covariance with a null-space design.
    Spatial,
    /// Unstructured covariance and unrelated priors.
    Random,
}

#[derive(Args, Debug, Clone)]
pub struct SimulateArgs {
    #[arg(long, value_enum, default_value = "rao")]
    pub kind: Kind,
    #[arg(long, default_value_t = 6)]
    pub n: usize,
    #[arg(long = "cols", default_value_t = 2)]
    pub cols: usize,
    /// Spatial autocorrelation for `spatial`.
    #[arg(long, default_value_t = 0.3, allow_negative_numbers = true)]
    pub rho: f64,
    /// Blocks of four ring nodes for `spatial`.
    #[arg(long, default_value_t = 2)]
    pub blocks: usize,
    #[arg(long, default_value_t = 1.0)]
    pub sigma2: f64,
}

fn sym(m: RealMatrix) -> RealMatrix {
    (&m + m.transpose()) * 0.5
}

fn finish(d: &GeneralLinearDesign, k1: RealMatrix, k2: RealMatrix, sigma2: f64, rng: &mut ChaCha8Rng) -> Result<ProblemFile, Failure> {
    let k = d.k();
    let w = k1.clone();
    let beta = RealVector::from_fn(k, |_, _| rng.random_range(-1.0..1.0));
    let seed = rng.random::<u64>();
    let y = d.clone().with_sigma2(sigma2)?.sample_observation(&beta, seed)?;
    Ok(ProblemFile {
        x: rows_of(d.x()),
        omega: Some(rows_of(d.omega())),
        sigma2: Some(sigma2),
        gamma: (sigma2 > 0.0).then_some(sigma2),
        w: Some(rows_of(&w)),
        k1: Some(rows_of(&k1)),
        k2: Some(rows_of(&k2)),
        y: Some(y.as_slice().to_vec()),
        ..Default::default()
    })
}

fn check_dims(n: usize, k: usize) -> Result<(), Failure> {
    if k == 0 || k >= n {
        return Err(Failure::new("invalid-input", format!("needs 0 < cols < n, got n = {n}, cols = {k}"), Some("cols")));
    }
    Ok(())
}

pub fn generate(args: &SimulateArgs, ctx: &Context) -> Result<ProblemFile, Failure> {
    let tol = &ctx.tol;
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed);
    let (n, k) = (args.n, args.cols);
    match args.kind {
        Kind::Example => {
            let fx = scenarios::example_fixture(9.0)?;
            let (base, slope) = scenarios::example_omega_affine();
            Ok(ProblemFile {
                x: rows_of(fx.design.x()),
                omega_affine: Some(AffineOmega { base: rows_of(&base), slope: rows_of(&slope) }),
                k1: Some(rows_of(&fx.k1)),
                k2: Some(rows_of(&fx.k2)),
                gamma: Some(1.0),
                w: Some(rows_of(&fx.k2)),
                y: Some(vec![1.0, 1.0, 0.0]),
                ..Default::default()
            })
        }
        Kind::Rao => {
            check_dims(n, k)?;
            let base = GeneralLinearDesign::new(scenarios::random_design_matrix(n, k, &mut rng), RealMatrix::identity(n, n), tol)?;
            let gamma = scenarios::random_spd(k, 10.0, &mut rng);
            let delta = scenarios::random_spd(n - k, 10.0, &mut rng);
            let d = base.with_omega(scenarios::rao_omega(&base, &gamma, &delta), tol)?;
            let fam = CommutingFamily::new(&d, tol)?;
            let p: Vec<f64> = (0..k).map(|_| rng.random_range(0.2..2.0)).collect();
            let (k1, k2) = (fam.companion(&p), fam.regularizer(&p));
            finish(&d, k1, k2, args.sigma2, &mut rng)
        }
        Kind::MixedEffects => {
            check_dims(n, k)?;
            let base = GeneralLinearDesign::new(scenarios::random_design_matrix(n, k, &mut rng), RealMatrix::identity(n, n), tol)?;
            // Γ̄ of rank one and a prior living on the complement of XᵀXΓ̄.
            let g = scenarios::random_matrix(k, 1, &mut rng);
            let gamma_bar = &g * g.transpose();
            let delta_bar = scenarios::random_psd_of_rank(n - k, n - k, &mut rng);
            let u = linalg::orthogonal_complement_basis(&(base.xtx() * &g), tol)?;
            let kk = if u.ncols() == 0 { RealMatrix::zeros(k, k) } else { sym(&u * u.transpose()) };
            let om = scenarios::mixed_effects_pair(&base, &kk, &gamma_bar, &delta_bar, tol)?;
            let d = base.with_omega(om, tol)?;
            finish(&d, kk.clone(), kk, args.sigma2, &mut rng)
        }
        Kind::Spatial => {
            let extra = k.saturating_sub(2);
            let inst = scenarios::spatial_null_space_instance(args.blocks, extra, args.rho, &mut rng, tol)?;
            finish(&inst.design, inst.k.clone(), inst.k, args.sigma2, &mut rng)
        }
        Kind::Random => {
            check_dims(n, k)?;
            let x = scenarios::random_design_matrix(n, k, &mut rng);
            let om = scenarios::random_spd(n, 10.0, &mut rng);
            let d = GeneralLinearDesign::new(x, om, tol)?;
            let k1 = scenarios::random_spd(k, 10.0, &mut rng);
            let k2 = scenarios::random_spd(k, 10.0, &mut rng);
            finish(&d, k1, k2, args.sigma2, &mut rng)
        }
    }
}
