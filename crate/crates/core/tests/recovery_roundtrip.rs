mod common;

#[test]
fn recovery_round_trip_is_exact_on_solved_states() {
    match common::check_recovery_round_trip() {
        Ok(s) => println!("{s}"),
        Err(s) => panic!("{s}"),
    }
}
