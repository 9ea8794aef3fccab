use qnet::bbm92::{analyze, read_timetags, run_protocol_multishot, write_timetags};
use qnet::optics::{DelayTable, ExperimentParams};
use qnet::states::BellState;
use qnet::Error;

#[test]
fn simulated_run_survives_a_file_round_trip() {
    let p = ExperimentParams::table1();
    let run = run_protocol_multishot(&p, 200_000, 51).unwrap();
    let mut buf = Vec::new();
    write_timetags(&mut buf, &run.alice, &run.bob).unwrap();
    let (alice, bob) = read_timetags(buf.as_slice()).unwrap();
    assert_eq!(alice.tags, run.alice.tags);
    assert_eq!(bob.tags, run.bob.tags);
    assert!((alice.acquisition_s - run.alice.acquisition_s).abs() < 1e-12);

    let before = analyze(
        &run.alice,
        &run.bob,
        2000.0,
        &DelayTable::zero(),
        BellState::PsiPlus,
    )
    .unwrap();
    let after = analyze(
        &alice,
        &bob,
        2000.0,
        &DelayTable::zero(),
        BellState::PsiPlus,
    )
    .unwrap();
    assert_eq!(before, after);
}

#[test]
fn unknown_node_reports_its_line() {
    let text = "# qnet-timetags v1\nnode,detector,timestamp_ps\nA,0,10\nC,1,20\n";
    match read_timetags(text.as_bytes()) {
        Err(Error::Format { line, .. }) => assert_eq!(line, 4),
        other => panic!("{other:?}"),
    }
}
