//! Item co-occurrence counts via a truncated sparse product, and the random
//! walk matrix behind the graph models.
//!
//!     cargo run --release --example sparse_products

use recbench::models::graph::walk_product;
use recbench::{sparse_topk_product, CsrMatrix};

fn main() -> recbench::Result<()> {
    let x = CsrMatrix::from_binary_rows(
        vec![vec![0, 1, 2], vec![0, 2], vec![1, 3], vec![0, 1, 2, 3], vec![2, 3]],
        4,
    )?;
    let xt = x.transpose();

    let full = sparse_topk_product(&xt, &x, None)?;
    println!("co-occurrence counts XᵀX:");
    for row in full.to_dense() {
        println!("  {row:?}");
    }

    let top2 = sparse_topk_product(&xt, &x, Some(2))?;
    println!("two largest entries per row:");
    for i in 0..top2.n_rows() {
        let entries: Vec<String> = top2.row(i).iter().map(|(j, v)| format!("{j}:{v}")).collect();
        println!("  item {i}: {}", entries.join(" "));
    }

    let walk = walk_product(&x, 1.0)?;
    println!("two-step transition probabilities (rows sum to 1):");
    for (i, row) in walk.to_dense().iter().enumerate() {
        let s: f64 = row.iter().sum();
        println!("  item {i}: {:?} sum {s:.3}", row.iter().map(|v| (v * 1e3).round() / 1e3).collect::<Vec<_>>());
    }
    Ok(())
}
