//! The CQ iteration as a special case: one domain set, one range set
//! transported through a linear map by a Landweber-type operator.
//!
//! Find x in the nonnegative orthant with A x in the half-space
//! `{y : <q, y> <= b}`. The composed block operator applies the Landweber
//! step first and the domain projection second; iterating it is exactly
//! the classic projected-gradient (CQ) iteration for this problem.
//!
//! ```bash
//! cargo run -p sacq --example landweber_cq
//! ```

use std::sync::Arc;

use sacq::{
    apply, fixed_point_residual, make_block_operator, HalfSpace, LandweberOp, LinearMap,
    OperatorNode, Sense, Vector,
};

fn main() -> sacq::Result<()> {
    let map = Arc::new(LinearMap::from_rows(vec![
        vec![1.0, 2.0, 0.0],
        vec![0.0, 1.0, -1.0],
        vec![2.0, 0.0, 1.0],
        vec![1.0, 1.0, 1.0],
    ])?);
    println!(
        "map: {} x {}, squared-norm bound {:.4}",
        map.rows(),
        map.cols(),
        map.norm_sq_upper()?
    );

    let range_set = HalfSpace::new(
        Vector::new(vec![1.0, 1.0, 1.0, 1.0])?,
        -2.0,
        Sense::UpperLe,
    )?;
    let v = LandweberOp::with_default_step(map, OperatorNode::halfspace(range_set))?;
    println!("step gamma = {:.6}", v.gamma());

    let block = make_block_operator(OperatorNode::OrthantProjector, v);

    let mut x = Vector::new(vec![2.0, 1.0, 1.5])?;
    println!("\n  k   residual     iterate");
    for k in 0..=40 {
        let residual = fixed_point_residual(&block, &x)?;
        if k % 5 == 0 {
            println!(
                "{k:>3}   {residual:>9.2e}   [{:.4}, {:.4}, {:.4}]",
                x[0], x[1], x[2]
            );
        }
        if residual < 1e-12 {
            println!("fixed point reached at iteration {k}");
            break;
        }
        x = apply(&block, &x)?;
    }
    Ok(())
}
