//! The repository-wide gradient check: every differentiable op and every
//! loss, compared against fourth-order central finite differences in 64-bit.

use ndarray::Array2;

use crate::deen::{deen_loss, Energy, EnergyModel};
use crate::error::Result;
use crate::nn::gradcheck::{self, GradCheckReport};
use crate::nn::{grad_of_input_grad, mlp_forward, Mlp, ParamStore};
use crate::noise::RngStream;
use crate::vae::{DecoderSpec, ModelShape, VaeModel};

/// Relative tolerance every entry must meet.
pub const TOLERANCE: f64 = 1e-6;
/// Finite-difference step of the fourth-order stencil.
pub const STEP: f64 = 1e-3;

#[derive(Debug, Clone)]
pub struct SuiteEntry {
    pub name: String,
    pub report: GradCheckReport,
}

impl SuiteEntry {
    pub fn passes(&self) -> bool {
        self.report.passes(TOLERANCE)
    }
}

struct Sizes {
    n: usize,
    d: usize,
    d_z: usize,
    hidden: Vec<usize>,
}

fn sizes(full: bool) -> Sizes {
    if full {
        Sizes { n: 6, d: 16, d_z: 4, hidden: vec![12, 8] }
    } else {
        Sizes { n: 3, d: 6, d_z: 2, hidden: vec![5] }
    }
}

/// Random biases so that every term of each layer is exercised.
fn jitter_biases(store: &mut ParamStore<f64>, rng: &mut RngStream) {
    for v in store.values_mut() {
        if v.nrows() == 1 {
            v.mapv_inplace(|_| 0.3 * rng.next_gauss());
        }
    }
}

fn entry(name: impl Into<String>, report: GradCheckReport) -> SuiteEntry {
    SuiteEntry { name: name.into(), report }
}

fn mlp_checks(s: &Sizes, rng: &mut RngStream, out: &mut Vec<SuiteEntry>) -> Result<()> {
    let mut widths = vec![s.d];
    widths.extend(&s.hidden);
    widths.push(3);
    let mlp = Mlp::new("mlp", &widths)?;
    let mut params = ParamStore::new();
    mlp.init(&mut params, rng)?;
    jitter_biases(&mut params, rng);
    let x: Array2<f64> = rng.gauss(s.n, s.d);
    let seed: Array2<f64> = rng.gauss(s.n, 3);
    let objective = |p: &ParamStore<f64>, x: &Array2<f64>| {
        let pass = mlp_forward(p, x.view(), &widths).unwrap();
        (pass.output() * &seed).sum()
    };
    let mut pass = mlp_forward(&params, x.view(), &widths)?;
    let (g, gx) = pass.backward(&params, seed.view())?;
    out.push(entry("mlp.params", gradcheck::check_richardson(&params, &g, STEP, |p| objective(p, &x))));

    let mut input = ParamStore::new();
    input.insert("input", x.clone())?;
    let mut analytic = ParamStore::new();
    analytic.insert("input", gx)?;
    out.push(entry(
        "mlp.input",
        gradcheck::check_richardson(&input, &analytic, STEP, |p| objective(&params, p.by_name("input").unwrap())),
    ));
    Ok(())
}

fn elbo_checks(s: &Sizes, rng: &mut RngStream, out: &mut Vec<SuiteEntry>) -> Result<()> {
    let shape = ModelShape { d: s.d, d_z: s.d_z, encoder_hidden: s.hidden.clone(), decoder_hidden: s.hidden.clone() };
    let mut model = VaeModel::<f64>::init(&shape, rng)?;
    jitter_biases(&mut model.phi, rng);
    jitter_biases(&mut model.theta, rng);
    let x: Array2<f64> = rng.uniform(s.n, s.d);
    let eps: Array2<f64> = rng.gauss(s.n, s.d_z);
    let specs = [
        ("elbo.gaussian", DecoderSpec::gaussian(0.3)),
        ("elbo.gaussian_beta", DecoderSpec::gaussian(0.8).with_beta(4.0)),
        ("elbo.laplace", DecoderSpec::laplace(0.4)),
        ("elbo.bernoulli", DecoderSpec::bernoulli()),
    ];
    for (name, spec) in specs {
        let (_, g) = model.loss_and_grads(x.view(), x.view(), &spec, eps.view())?;
        let loss = |m: &VaeModel<f64>| -m.elbo_with_noise(x.view(), x.view(), &spec, eps.view()).unwrap().mean_elbo();
        let phi = gradcheck::check_richardson(&model.phi, &g.phi, STEP, |p| {
            let mut m = model.clone();
            m.phi = p.clone();
            loss(&m)
        });
        out.push(entry(format!("{name}.phi"), phi));
        let theta = gradcheck::check_richardson(&model.theta, &g.theta, STEP, |p| {
            let mut m = model.clone();
            m.theta = p.clone();
            loss(&m)
        });
        out.push(entry(format!("{name}.theta"), theta));
    }
    Ok(())
}

fn deen_checks(s: &Sizes, rng: &mut RngStream, out: &mut Vec<SuiteEntry>) -> Result<()> {
    let sigma = 0.7;
    let mut model = EnergyModel::<f64>::init(s.d, &s.hidden, sigma, rng)?;
    jitter_biases(&mut model.params, rng);
    let x: Array2<f64> = rng.uniform(s.n, s.d);
    let y = &x + &(rng.gauss::<f64>(s.n, s.d) * sigma);

    let (_, g) = model.loss_and_grad(x.view(), y.view())?;
    out.push(entry(
        "deen.loss",
        gradcheck::check_richardson(&model.params, &g, STEP, |p| {
            let mut m = model.clone();
            m.params = p.clone();
            deen_loss(&m, x.view(), y.view()).unwrap()
        }),
    ));

    let v: Array2<f64> = rng.gauss(s.n, s.d);
    let g = grad_of_input_grad(model.mlp(), &model.params, y.view(), v.view())?;
    out.push(entry(
        "deen.grad_of_input_grad",
        gradcheck::check_richardson(&model.params, &g, STEP, |p| {
            let mut m = model.clone();
            m.params = p.clone();
            (m.input_grad(y.view()).unwrap() * &v).sum()
        }),
    ));

    let mut input = ParamStore::new();
    input.insert("y", y.clone())?;
    let mut analytic = ParamStore::new();
    analytic.insert("y", model.input_grad(y.view())?)?;
    out.push(entry(
        "deen.input_grad",
        gradcheck::check_richardson(&input, &analytic, STEP, |p| model.energy(p.by_name("y").unwrap().view()).unwrap().sum()),
    ));
    Ok(())
}

/// Runs every check. `full` uses wider nets and larger batches.
pub fn gradcheck_suite(full: bool) -> Result<Vec<SuiteEntry>> {
    let s = sizes(full);
    let mut rng = RngStream::new(if full { 2 } else { 1 }, "gradcheck");
    let mut out = Vec::new();
    mlp_checks(&s, &mut rng, &mut out)?;
    elbo_checks(&s, &mut rng, &mut out)?;
    deen_checks(&s, &mut rng, &mut out)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quick_suite_passes() {
        let entries = gradcheck_suite(false).unwrap();
        assert_eq!(entries.len(), 13);
        for e in &entries {
            assert!(e.passes(), "{}: {:?}", e.name, e.report);
            assert!(e.report.checked > 0);
        }
    }
}
