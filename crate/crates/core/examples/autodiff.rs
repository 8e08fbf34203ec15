//! Record a small computation on the tape, backpropagate, and confirm the
//! gradient against central differences.

use ssavd::tensor::{grad_check, Graph, Tensor};

fn main() -> ssavd::Result<()> {
    let g = Graph::<f64>::new();
    let x = g.param(Tensor::from_f64(&[2, 3], &[0.5, -1.0, 2.0, 0.1, 0.3, -0.7])?);
    let w = g.param(Tensor::from_f64(&[3, 2], &[1.0, 0.5, -0.5, 0.2, 0.3, -1.0])?);
    let y = x.matmul(&w)?.relu().softmax(1)?.ln().sum().neg();
    y.backward()?;
    println!("loss = {:.6}", y.value().item());
    println!("dL/dx = {:?}", x.grad().unwrap().data());
    println!("dL/dw = {:?}", w.grad().unwrap().data());

    let report = grad_check(
        |_, v| Ok(v[0].matmul(&v[1])?.relu().softmax(1)?.ln().sum().neg()),
        &[x.tensor(), w.tensor()],
        1e-5,
    )?;
    println!("finite-difference max relative error: {:.2e}", report.max_rel_err);
    Ok(())
}
