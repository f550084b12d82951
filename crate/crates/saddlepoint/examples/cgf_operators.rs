//! Tour of the CGF object model: composing nodes, the five derivative
//! operators, and exact parameter derivatives by dual seeding.
//!
//! Run with: `cargo run --release --example cgf_operators`

use saddlepoint::cgf::{CellSpec, CgfNode, ParamExpr};
use saddlepoint::dual::{constants, seed_gradient};
use saddlepoint::linalg::Mat;

fn main() {
    // X = (G, P) with G ~ Gamma(θ0, 1) and P ~ Poisson(θ1), independent
    let node = CgfNode::concat(vec![
        CgfNode::gamma(ParamExpr::theta(0), ParamExpr::constant(1.0)),
        CgfNode::poisson(ParamExpr::theta(1)),
    ])
    .expect("concat");
    let theta = [5.0, 2.0];
    let t = [0.3, -0.4];

    println!("K(t)        = {:.6}", node.k(&t, &theta).unwrap());
    println!("K(0)        = {:.3e} (always zero)", node.k(&[0.0, 0.0], &theta).unwrap());
    println!("mean K'(0)  = {:?}", node.grad_t(&[0.0, 0.0], &theta).unwrap());
    println!("cov  K''(0) = {:?}", node.hess_t(&[0.0, 0.0], &theta).unwrap().data);

    // third/fourth cumulant contractions along a direction
    let v = [1.0, 1.0];
    let k3 = node.k3_contract(&[0.0, 0.0], &theta, &v, &v, &v).unwrap();
    let k4 = node.k4_contract(&[0.0, 0.0], &theta, &v, &v, &v, &v).unwrap();
    println!("K3(v,v,v)   = {k3:.6} (gamma 2a + poisson rate = {:.6})", 2.0 * theta[0] + theta[1]);
    println!("K4(v,...)   = {k4:.6} (gamma 6a + poisson rate = {:.6})", 6.0 * theta[0] + theta[1]);

    // exact parameter derivatives: seed θ with dual numbers
    let theta_dual = seed_gradient(&theta);
    let t_dual = constants(&t);
    let k_dual = node.k(&t_dual, &theta_dual).unwrap();
    println!(
        "dK/dθ       = [{:.6}, {:.6}] (hand: [−ln(1−t₁), e^t₂ − 1] = [{:.6}, {:.6}])",
        k_dual.partial(0),
        k_dual.partial(1),
        -(1.0f64 - t[0]).ln(),
        t[1].exp() - 1.0,
    );

    // a mapped multinomial: observed counts are a known 0/1 split of latent
    // counts, exactly the structure capture-recapture models need
    let split = Mat::from_rows(vec![vec![1.0, 1.0, 0.0], vec![0.0, 1.0, 1.0]]);
    let mapped = CgfNode::linear_map(
        split,
        CgfNode::multinomial(
            ParamExpr::constant(30.0),
            CellSpec::Probs(vec![
                ParamExpr::constant(0.5),
                ParamExpr::constant(0.2),
                ParamExpr::constant(0.3),
            ]),
        ),
    )
    .expect("linear map");
    println!(
        "mapped multinomial mean = {:?} (30·Aπ)",
        mapped.grad_t(&[0.0, 0.0], &[]).unwrap()
    );
}
