use upcause::cover::{solve, SolutionDoc, SolveConfig};
use upcause::fixtures;
use upcause::gridworld::{builtin_env, Env};
use upcause::spr::{is_spr_cause, tau};
use upcause::validation::{mc_f, mc_r};
use upcause::{parse_model, StateSet};

#[test]
fn model_json_round_trip() {
    for m in [
        fixtures::example1_model(),
        fixtures::two_route_model(),
        builtin_env(Env::B).generate().unwrap(),
    ] {
        let again = parse_model(&m.to_json()).unwrap();
        assert_eq!(again.to_json(), m.to_json());
        let u = vec![0.3; m.params().dim()];
        let (a, b) = (m.instantiate(&u), again.instantiate(&u));
        assert_eq!(a.is_ok(), b.is_ok());
    }
}

#[test]
fn identify_then_validate() {
    let model = fixtures::example1_model();
    let dist = fixtures::example1_dist();
    let sol = solve(&model, &dist, &SolveConfig::new(300, 0.0, 0.99, 12)).unwrap();
    let doc = SolutionDoc::parse(&sol.to_json(model.skeleton(), false)).unwrap();
    let (members, s_n) = doc.resolve(model.skeleton()).unwrap();
    assert_eq!(members, sol.members);
    let f = mc_f(&model, &dist, &members[0], 2000, 1).unwrap();
    assert!(f.estimate + f.half_width >= sol.eta[0]);
    let r = mc_r(&model, &dist, &members, &s_n, 2000, 1).unwrap();
    assert!(r.estimate + r.half_width >= sol.zeta);
}

#[test]
fn members_are_causes_with_verified_members() {
    let model = fixtures::example1_model();
    let cm = model.instantiate(&[0.3, 0.6]).unwrap();
    let set: StateSet = model.skeleton().state_set(&["s2", "s3"]).unwrap();
    assert!(is_spr_cause(&cm, &set).unwrap());
    for &c in &set {
        assert_eq!(tau(&cm, c).unwrap().tau, 1);
    }
}
