// Writes 2-D contour grids for every supported penalty, plus the three TL1
// shapes that show it moving from L0-like (small a) to L1-like (large a).
//
// Run with `cargo run --example penalty_contours [output_dir]`.

use std::error::Error;
use std::path::{Path, PathBuf};

use sparseprox::penalties::{contour_grid, penalty_value_vector, PenaltySpec, PENALTY_NAMES};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let dir = std::env::temp_dir().join(format!("sparseprox-contours-{}", std::process::id()));
    write_contours(&dir)?;
    std::fs::remove_dir_all(&dir)?;
    Ok(())
}

pub fn write_contours(dir: &Path) -> Result<(), Box<dyn Error>> {
    std::fs::create_dir_all(dir)?;

    for name in PENALTY_NAMES {
        let spec = PenaltySpec::from_name(name, 1.0, 1.0, 3.7, 0.5)?;
        let grid = contour_grid(&spec, 1.0, 41)?;
        let path = dir.join(format!("{name}.csv"));
        grid.save_csv(&path)?;
        let corner = penalty_value_vector(&spec, &[1.0, 1.0])?;
        println!("{name:>12}: value at (1, 1) = {corner:.4} -> {}", path.display());
    }

    // on the unit circle an L0-like penalty is largest off the axes
    for a in [1e-2, 1.0, 1e2] {
        let spec = PenaltySpec::tl1(a)?;
        contour_grid(&spec, 1.0, 101)?.save_csv(&dir.join(format!("tl1_a_{a}.csv")))?;
        let axis = penalty_value_vector(&spec, &[1.0, 0.0])?;
        let diagonal = penalty_value_vector(&spec, &[0.5f64.sqrt(), 0.5f64.sqrt()])?;
        println!("tl1 a = {a:<6}: axis {axis:.4}, diagonal {diagonal:.4}");
    }
    Ok(())
}

#[allow(dead_code)]
fn main() {
    let dir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("sparseprox-contours"));
    if let Err(e) = write_contours(&dir) {
        eprintln!("penalty_contours: {e}");
        std::process::exit(1);
    }
}
