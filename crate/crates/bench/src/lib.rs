//! Shared fixtures for the benchmarks.

use wamct::{
    build_system_matrix, rasterize_phantom, simulate_counts, ImageGrid, IncidentCounts,
    PhantomSpec, ScanGeometry, SimulationSpec, SystemMatrix, TransmissionData,
};

pub struct Fixture {
    pub geometry: ScanGeometry,
    pub h: SystemMatrix,
    pub data: TransmissionData,
}

/// Desk phantom on an `n x n` fan-beam problem covering a 64 mm field.
pub fn fan_fixture(n: usize) -> Fixture {
    let grid = ImageGrid::new(n, n, 1, 64.0 / n as f64);
    let defaults = ScanGeometry::default_fan();
    let geometry = ScanGeometry::fan(
        grid,
        defaults.views(),
        defaults.detectors,
        defaults.detector_spacing,
        200.0,
        400.0,
    );
    let h = build_system_matrix(&geometry).expect("valid geometry");
    let truth = rasterize_phantom(&PhantomSpec::default_desk(), &grid).expect("valid phantom");
    let sim = SimulationSpec {
        incident: IncidentCounts::Uniform(1e5),
        seed: 1,
        noise: true,
    };
    let data = simulate_counts(&truth, &h, &sim).expect("simulation");
    Fixture { geometry, h, data }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixture_shapes() {
        let f = fan_fixture(32);
        assert_eq!(f.h.cols(), 32 * 32);
        assert_eq!(f.h.rows(), 60 * 96);
        assert_eq!(f.data.len(), f.h.rows());
    }
}
