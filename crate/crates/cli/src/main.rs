use std::io::{self, BufWriter};

fn main() {
    ahtn_cli::init_logging();
    let stdin = io::stdin();
    let mut input = stdin.lock();
    let mut out = BufWriter::new(io::stdout().lock());
    let code = ahtn_cli::run(std::env::args_os(), &mut input, &mut out, &mut io::stderr());
    drop(out);
    std::process::exit(code);
}
