use rwhec::benchmark::{run_benchmark, BenchmarkOptions, Method};
use rwhec::simulation::ScenarioSpec;

#[test]
#[ignore]
fn tune() {
    for (t0, t1, turns) in [
        (20.0, 70.0, 2.0),
        (20.0, 45.0, 1.0),
        (30.0, 50.0, 1.0),
        (15.0, 35.0, 1.0),
        (10.0, 30.0, 0.75),
    ] {
        let mut spec = ScenarioSpec::sphere(2026);
        spec.polar_range = ((t0 as f64).to_radians(), (t1 as f64).to_radians());
        spec.azimuth_turns = turns;
        let report = run_benchmark(
            &spec,
            20,
            &[Method::Sdp, Method::Linear],
            &BenchmarkOptions::default(),
        );
        let sdp = &report.rows[0];
        let lin = &report.rows[1];
        println!(
            "theta [{t0},{t1}] turns {turns}: ours t_x {:.2} r_x {:.3} t_y {:.2} r_y {:.3} | linear t_x {:.2} r_x {:.3}",
            sdp.t_x_mm.mean, sdp.r_x_deg.mean, sdp.t_y_mm.mean, sdp.r_y_deg.mean,
            lin.t_x_mm.mean, lin.r_x_deg.mean
        );
    }
}
