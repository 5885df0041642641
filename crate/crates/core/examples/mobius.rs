//! Möbius function and counting coefficients of a small region poset.

use regionalized::Poset;

fn main() -> regionalized::Result<()> {
    // two overlapping regions and their intersection
    let p = Poset::new(&["12", "23", "2"], &[("2", "12"), ("2", "23")])?;
    for a in 0..p.len() {
        println!("c({}) = {}", p.name(a), p.counting(a));
    }
    println!("mu(12, 2) = {}", p.mobius_by_name("12", "2")?);

    let cube = Poset::powerset(3);
    let top = cube.maximum().expect("powerset has a top");
    let row: Vec<i64> = (0..cube.len()).map(|b| cube.mobius_or_zero(top, b)).collect();
    println!("mu(123, b) over the cube: {row:?}");

    match Poset::new(&["x", "y", "z"], &[("x", "y"), ("y", "z"), ("z", "x")]) {
        Err(e) => println!("rejected: {e}"),
        Ok(_) => unreachable!(),
    }
    Ok(())
}
