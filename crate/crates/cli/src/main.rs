fn main() {
    let (code, out) = sibling_cli::run(std::env::args_os());
    if code == sibling_cli::EXIT_INPUT {
        eprint!("{out}");
    } else {
        print!("{out}");
    }
    std::process::exit(code);
}
