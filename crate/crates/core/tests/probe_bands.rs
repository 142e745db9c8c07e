use rwhec::benchmark::{run_benchmark, BenchmarkOptions, Method};
use rwhec::simulation::ScenarioSpec;

#[test]
#[ignore]
fn probe_sphere() {
    let spec = ScenarioSpec::sphere(2026);
    let report = run_benchmark(&spec, 20, &[Method::Sdp, Method::Linear, Method::LocalFromLinear], &BenchmarkOptions::default());
    println!("{}", report.to_csv());
    for o in report.outcomes.iter().filter(|o| o.method == "sdp") {
        println!("trial {}: rho {:?} gap {:?} t {:.1} ms", o.trial, o.rho_hat, o.kernel_gap, o.runtime_ms);
    }
}

#[test]
#[ignore]
fn probe_multicam() {
    let spec = ScenarioSpec::multi_camera(2026);
    let report = run_benchmark(&spec, 20, &[Method::Sdp, Method::LocalFromLinear], &BenchmarkOptions::default());
    println!("{}", report.to_csv());
}

#[test]
#[ignore]
fn probe_two_sphere() {
    let spec = ScenarioSpec::two_sphere(2026);
    let report = run_benchmark(&spec, 20, &[Method::Sdp, Method::LocalClose], &BenchmarkOptions::default());
    println!("{}", report.to_csv());
}
