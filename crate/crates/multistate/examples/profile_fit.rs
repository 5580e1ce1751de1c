use multistate::csh::*;
use multistate::dist::{Family, LinkedDist};
use multistate::inference::fd_gradient;
use multistate::model::*;
use multistate::rng::stream;
use rand::Rng;
use std::collections::BTreeMap;

fn main() {
    let m = ModelStructure::hospital();
    let mut rng = stream(99, "test-sim", 0);
    let rates = (1.0, 0.5, 2.0);
    let mut observations = Vec::new();
    for i in 0..5000 {
        let draws = [
            (1usize, -rng.gen::<f64>().ln() / rates.0),
            (2usize, -rng.gen::<f64>().ln() / rates.1),
            (3usize, -rng.gen::<f64>().ln() / rates.2),
        ];
        let &(s, t) = draws.iter().min_by(|a, b| a.1.partial_cmp(&b.1).unwrap()).unwrap();
        observations.push(Observation {
            subject: format!("s{i}"),
            from: 0,
            to: Some(s),
            time: t,
            status: Status::Transition,
            covariates: BTreeMap::new(),
        });
    }
    let d = load_dataset(observations, &m, ZeroTimePolicy::default()).unwrap();
    let split = split_by_transition(&d, &m, Status3Scope::DeathOnly);
    let td = &split[&(0, 1)];
    let template = LinkedDist::constant(Family::Gamma, false);
    let lik = TransitionLikelihood::new(td, &d);
    let x0 = initial_values(&template, td);
    let f = |x: &[f64]| lik.loglik(&template, x);

    // manual BFGS trace (mirrors inference::maximize)
    let mut x = x0.clone();
    let mut fx = f(&x).unwrap();
    println!("x0={x:?} f={fx:.4}");
    let mut g = fd_gradient(&f, &x);
    for iter in 0..30 {
        println!("iter {iter}: x={x:?} f={fx:.6} g={g:?}");
        // steepest ascent with backtracking, to see scales
        let mut step = 1.0;
        let mut taken = false;
        for ls in 0..60 {
            let xn: Vec<f64> = x.iter().zip(&g).map(|(xi, gi)| xi + step * gi).collect();
            match f(&xn) {
                Ok(fn_) if fn_ > fx => {
                    println!("   accepted ls={ls} step={step:.3e} f={fn_:.6}");
                    x = xn; fx = fn_; taken = true;
                    break;
                }
                _ => step *= 0.5,
            }
        }
        if !taken { println!("   no step"); break; }
        g = fd_gradient(&f, &x);
        if g.iter().map(|v| v.abs()).fold(0.0, f64::max) < 1e-4 { println!("   converged"); break; }
    }
}
