use regal_lab::validate::Suite;

fn main() {
    let outcomes = Suite::new().run_all();
    for o in &outcomes {
        println!("{o}");
    }
    let failed = outcomes.iter().filter(|o| !o.passed).count();
    println!("acceptance: {} passed, {failed} failed", outcomes.len() - failed);
    if outcomes.len() != 12 || failed > 0 {
        std::process::exit(1);
    }
}
