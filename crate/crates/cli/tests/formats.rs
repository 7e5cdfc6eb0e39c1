use std::io::Cursor;

use proptest::prelude::*;

use permsmr::harness::run_scenario;
use permsmr::workload::{random_scenario, Profile};
use permsmr_cli::scenario_file::{render, ScenarioFile};
use permsmr_cli::trace_text::{read_trace, write_trace};

fn profile() -> impl Strategy<Value = Profile> {
    prop_oneof![Just(Profile::Chaos), Just(Profile::EventuallySynchronous)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn scenario_files_round_trip(seed in any::<u64>(), profile in profile()) {
        let sc = random_scenario(seed, profile);
        let back: ScenarioFile = render(&sc, None).parse().unwrap();
        prop_assert_eq!(back.scenario, sc);
    }

    #[test]
    fn trace_files_round_trip(seed in 0u64..10_000) {
        let trace = run_scenario(&random_scenario(seed, Profile::Chaos)).unwrap().trace;
        let mut bytes = Vec::new();
        write_trace(&mut bytes, &trace).unwrap();
        let back = read_trace(Cursor::new(bytes)).unwrap().unwrap();
        prop_assert_eq!(back, trace);
    }

    #[test]
    fn any_cut_of_a_trace_parses_or_reports_its_line(seed in 0u64..50, frac in 0.0f64..1.0) {
        let trace = run_scenario(&random_scenario(seed, Profile::Chaos)).unwrap().trace;
        let mut bytes = Vec::new();
        write_trace(&mut bytes, &trace).unwrap();
        let cut = (bytes.len() as f64 * frac) as usize;
        let lines = bytes[..cut].split(|&b| b == b'\n').count();
        match read_trace(Cursor::new(&bytes[..cut])).unwrap() {
            Ok(prefix) => prop_assert_eq!(&prefix[..], &trace[..prefix.len()]),
            Err(e) => prop_assert_eq!(e.line, lines),
        }
    }
}
