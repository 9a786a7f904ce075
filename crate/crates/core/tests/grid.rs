use entorder::catalog::{build, entries};
use entorder::verdict::{hierarchy_check, Answer};

#[test]
fn catalog_grid_is_consistent_and_verifiable() {
    let states: Vec<_> = entries().into_iter().map(|e| (e.name.clone(), build(&e.name).unwrap())).collect();
    let mut decided = 0;
    for (na, a) in &states {
        for (nb, b) in &states {
            if a.parties() != b.parties() {
                continue;
            }
            let r = hierarchy_check(a, b).unwrap_or_else(|e| panic!("{na} → {nb}: {e}"));
            for v in r.verdicts() {
                assert!(v.verify(a, b).unwrap(), "{na} → {nb} {}: {:?} does not re-verify", v.regime, v.reason);
                if v.answer != Answer::Unknown {
                    decided += 1;
                }
            }
            assert_ne!(r.mclocc.answer, Answer::Unknown);
        }
    }
    assert!(decided > 0);
}
