//! Log-ratio coordinates and Aitchison distances for a few compositions.

use coda_zero::geometry::{aitchison_distance, alr, clr, ilr_pivot, inverse_ilr, variation_matrix};
use nalgebra::DMatrix;

fn main() -> coda_zero::Result<()> {
    let x = DMatrix::from_row_slice(4, 3, &[
        0.2, 0.3, 0.5, //
        0.1, 0.6, 0.3, //
        0.4, 0.4, 0.2, //
        0.25, 0.25, 0.5,
    ]);

    println!("clr:\n{}", clr(&x)?.values);
    println!("alr (reference part 2):\n{}", alr(&x, 2)?.values);

    let z = ilr_pivot(&x, 0)?;
    println!("ilr with part 0 as pivot:\n{}", z.values);
    let back = inverse_ilr(&z)?;
    println!("round-trip error: {:.2e}", (back - &x).amax());

    let a: Vec<f64> = x.row(0).iter().copied().collect();
    let b: Vec<f64> = x.row(1).iter().copied().collect();
    let scaled: Vec<f64> = b.iter().map(|v| v * 1000.0).collect();
    println!("d_A(row0, row1) = {:.6}", aitchison_distance(&a, &b)?);
    println!("d_A(row0, 1000*row1) = {:.6}", aitchison_distance(&a, &scaled)?);

    let t = variation_matrix(&x)?;
    println!("variation matrix:\n{}", t.values);
    println!("parts closest to part 0: {:?}", t.closest_parts(0));
    Ok(())
}
