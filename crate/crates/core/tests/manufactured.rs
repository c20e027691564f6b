#[path = "support/mms.rs"]
mod mms;

#[test]
fn crank_nicolson_is_second_order_in_time() {
    let errs: Vec<f64> = [0.1, 0.05, 0.025].iter().map(|&k| mms::temporal_error(k)).collect();
    for w in errs.windows(2) {
        let ratio = w[0] / w[1];
        assert!((3.4..=4.6).contains(&ratio), "errors {errs:?}, ratio {ratio}");
    }
}

#[test]
fn q1_velocity_converges_at_second_order_in_space() {
    let errs = mms::spatial_errors(5);
    let rates: Vec<f64> = errs.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    assert!(rates.iter().all(|&r| r >= 1.8), "errors {errs:?}, rates {rates:?}");
}
