use visperf_core::domain::Phase;
use visperf_core::model::{default_population, simulate_responses};
use visperf_core::records::{load_responses, read_responses, responses_to_string, save_responses};
use visperf_core::stimulus::generate_design;

#[test]
fn full_study_round_trip() {
    let design = generate_design(11);
    let (mut rows, _) = simulate_responses(&default_population(4), &design, 109, 11).unwrap();
    rows.retain(|r| design.trial(r.trial_index).unwrap().phase == Phase::Main);
    assert_eq!(rows.len(), 130_800);

    let first = responses_to_string(&rows);
    let back = read_responses(first.as_bytes()).unwrap();
    assert_eq!(back, rows);
    assert_eq!(responses_to_string(&back), first);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("responses.csv");
    save_responses(&rows, &path).unwrap();
    assert_eq!(std::fs::read_to_string(&path).unwrap(), first);
    assert_eq!(load_responses(&path).unwrap(), rows);
}
