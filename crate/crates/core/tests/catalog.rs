use entorder::catalog::{build, entries};
use entorder::invariants::{local_ranks, tensor_rank};
use entorder::structure::partition;
use entorder::SearchBudget;

#[test]
fn every_entry_matches_its_expected_invariants() {
    for e in entries() {
        let s = build(&e.name).unwrap();
        let exp = e.expected.as_ref().expect("fixed entries carry expectations");
        assert_eq!(local_ranks(&s), exp.local_ranks, "{} local ranks", e.name);
        assert_eq!(partition(&s).blocks, exp.partition, "{} partition", e.name);
        if let Some(r) = exp.rank {
            let status = tensor_rank(&s, &SearchBudget::default());
            assert_eq!(status.exact_value(), Some(r), "{} tensor rank {:?}", e.name, status);
        }
    }
}
