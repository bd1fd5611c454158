//! gnuplot scripts for the CSV outputs. Run them from the output directory:
//! `gnuplot compare_ftl.gp` writes `compare_ftl.png`.

fn header(name: &str, xlabel: &str, ylabel: &str) -> String {
    format!(
        "set datafile separator ','\n\
         set key autotitle columnhead\n\
         set terminal pngcairo size 900,600\n\
         set output '{name}.png'\n\
         set xlabel '{xlabel}'\n\
         set ylabel '{ylabel}'\n"
    )
}

/// Overlay of the FtL step functions; `files` are `(csv, title)` pairs with
/// columns `x,u`.
pub fn compare_ftl(files: &[(String, String)]) -> String {
    let mut s = header("compare_ftl", "x", "density");
    s.push_str("set yrange [0:1.05]\n");
    let curves: Vec<String> = files
        .iter()
        .map(|(f, title)| format!("'{f}' using 1:2 with lines title '{title}'"))
        .collect();
    s.push_str(&format!("plot {}\n", curves.join(", \\\n     ")));
    s
}

/// `1/w` traces against the reference; `traces` are `(csv, α label)`.
pub fn zero_filter(reference: &str, traces: &[(String, String)]) -> String {
    let mut s = header("zero_filter", "x", "density");
    s.push_str("set yrange [0:1.05]\n");
    let mut curves = vec![format!(
        "'{reference}' using 2:3 with lines lw 2 dt 2 title 'entropy solution'"
    )];
    curves.extend(
        traces
            .iter()
            .map(|(f, a)| format!("'{f}' using 2:3 with steps title '1/w, alpha={a}'")),
    );
    s.push_str(&format!("plot {}\n", curves.join(", \\\n     ")));
    s.push_str("\nset output 'zero_filter_rate.png'\nset logscale xy\nset xlabel 'alpha'\nset ylabel 'L1 error'\nunset yrange\n");
    s.push_str("plot 'zero_filter.csv' using 1:2 with linespoints title '|1/w - rho|', \\\n     'zero_filter.csv' using 1:5 with lines title 'bound'\n");
    s
}

/// Filtered gap against `α`, one curve per kernel.
pub fn filter_study(kernels: &[&str]) -> String {
    let mut s = header("filter_study", "alpha", "dz sum |y - w|");
    s.push_str("set logscale xy\n");
    let curves: Vec<String> = kernels
        .iter()
        .map(|k| format!("'filter_study.csv' using ((strcol(1) eq '{k}') ? $2 : 1/0):3 with linespoints title '{k}'"))
        .collect();
    s.push_str(&format!("plot {}\n", curves.join(", \\\n     ")));
    s
}

pub fn simulate() -> String {
    let mut s = header("simulate", "x", "density");
    s.push_str("set yrange [0:1.05]\n");
    s.push_str("plot 'trace_w.csv' using 2:3 with steps title '1/w', 'trace_y.csv' using 2:3 with steps title '1/y'\n");
    s
}
