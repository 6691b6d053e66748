use julia_gasket_cli::{execute, parse, summary_line};

fn main() {
    let inv = match parse(std::env::args_os()) {
        Ok(inv) => inv,
        // help and version exit 0, usage errors exit 2
        Err(e) => e.exit(),
    };
    let outcome = execute(&inv);
    println!("{}", summary_line(&outcome.summary));
    std::process::exit(outcome.code);
}
