//! Iterative submesh partitioning: coarse regions get more cells per submesh.
use tvd_lts::mesh::{build_mesh, Warp};
use tvd_lts::perfmodel::iterate_partition;

fn main() -> tvd_lts::error::Result<()> {
    let mesh = build_mesh(100, Warp::polynomial(), (-1.0, 1.0), false)?;
    let search = iterate_partition(&mesh, 20, 100)?;
    let sizes: Vec<usize> = (0..20).map(|s| search.best.range(s).len()).collect();
    println!("cells per submesh: {sizes:?}");
    println!("heaviest submesh over {} iterates: best {:.1}, first {:.1}", search.max_loads.len(), search.max_loads.iter().copied().fold(f64::INFINITY, f64::min), search.max_loads[0]);
    println!("splitters: {:?}", search.best.splitters());
    Ok(())
}
