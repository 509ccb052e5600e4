mod common;

#[test]
fn manufactured_solution_matches_finite_differences() {
    match common::check_mms_oracle() {
        Ok(s) => println!("{s}"),
        Err(s) => panic!("{s}"),
    }
}
