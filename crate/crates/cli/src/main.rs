fn main() {
    let env = |k: &str| std::env::var(k).ok();
    std::process::exit(garde_cli::main_with(std::env::args_os(), &env));
}
