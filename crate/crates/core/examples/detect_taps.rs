//! Generate a synthetic wrist stream, run the tap detector on it and
//! report how many labelled taps were found.

use taptype::signal::synth::{synth_tap_stream, GeneratorSpec};
use taptype::signal::{detect_taps, DetectorConfig};
use taptype::Hand;

fn main() -> taptype::Result<()> {
    let spec = GeneratorSpec::default();
    let (stream, labels) = synth_tap_stream(&spec, Hand::Right, 60, 1)?;
    let config = DetectorConfig::default();
    let taps = detect_taps(&stream, Hand::Right, &config)?;

    let tol = stream.samples_for_ms(25.0) as i64;
    let truth: Vec<i64> = labels.iter().filter(|l| l.class.is_some()).map(|l| l.t as i64).collect();
    let found = truth.iter().filter(|&&t| taps.iter().any(|c| (c.t_z as i64 - t).abs() <= tol)).count();
    println!(
        "{:.1} s of signal at {} Hz: {} candidates, {found}/{} labelled taps within 25 ms",
        stream.len() as f64 / stream.sample_rate() as f64,
        stream.sample_rate(),
        taps.len(),
        truth.len()
    );
    for tap in taps.iter().take(5) {
        println!("  tap at sample {} (window of {} frames)", tap.t_z, tap.window.len());
    }
    Ok(())
}
