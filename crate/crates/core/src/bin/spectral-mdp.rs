fn main() {
    std::process::exit(spectral_mdp::harness::run_cli(std::env::args_os()));
}
