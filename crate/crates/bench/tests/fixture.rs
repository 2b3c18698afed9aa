use fairrank::rankers;
use fairrank_bench::fixture;

#[test]
fn fixture_is_solvable() {
    let (inst, spec) = fixture(80, 10, 5).unwrap();
    assert_eq!((inst.m(), inst.n(), inst.p()), (80, 10, 2));
    let r = rankers::nresilient(&inst, &spec, 1).unwrap();
    assert_eq!(r.len(), 10);
}

#[test]
fn fixture_is_seeded() {
    assert_eq!(fixture(30, 5, 9).unwrap().0, fixture(30, 5, 9).unwrap().0);
    assert_ne!(fixture(30, 5, 9).unwrap().0, fixture(30, 5, 10).unwrap().0);
}
