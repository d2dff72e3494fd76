mod common;

#[test]
fn latency_components_are_faithful() {
    common::latency_fidelity(2_000, 1).unwrap();
}

#[test]
fn kinematics_follow_closed_form_and_speed_cap() {
    common::kinematics(1_000, 20_000, 2).unwrap();
}
