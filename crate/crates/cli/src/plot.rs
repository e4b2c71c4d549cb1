//! gnuplot script for a trajectory CSV.
//!
//! Figure 1 stacks output with reference, control input and disturbance.
//! Figure 2 plots each parameter estimate against its true value.

use std::fmt::Write as _;

use adaptive_pp::trajectory::Trajectory;

pub fn gnuplot_script(csv_name: &str, tr: &Trajectory) -> String {
    let d = 2 * tr.n + 1;
    let mut s = String::new();
    let _ = writeln!(s, "# usage: gnuplot plots.gp (run from the output directory)");
    let _ = writeln!(s, "set datafile separator ','");
    let _ = writeln!(s, "data = '{csv_name}'");
    let _ = writeln!(s, "set terminal pngcairo size 900,900");
    let _ = writeln!(s, "set grid");
    let _ = writeln!(s, "set xlabel 't'");
    let _ = writeln!(s);
    let _ = writeln!(s, "set output 'figure1.png'");
    let _ = writeln!(s, "set multiplot layout 3,1");
    let _ = writeln!(
        s,
        "plot data using (column('t')):(column('y')) with lines title 'y', \\\n     data using (column('t')):(column('r')) with lines dashtype 2 title 'r'"
    );
    let _ = writeln!(s, "plot data using (column('t')):(column('u')) with lines title 'u'");
    let _ = writeln!(s, "plot data using (column('t')):(column('w')) with lines title 'w'");
    let _ = writeln!(s, "unset multiplot");
    let _ = writeln!(s);

    let rows = d.div_ceil(2);
    let _ = writeln!(s, "set terminal pngcairo size 900,{}", 300 * rows);
    let _ = writeln!(s, "set output 'figure2.png'");
    let _ = writeln!(s, "set multiplot layout {rows},2");
    let truth = tr.meta.theta_star.as_deref();
    for i in 1..=d {
        let _ = write!(
            s,
            "plot data using (column('t')):(column('thetahat_{i}')) with lines title 'estimate {i}'"
        );
        if let Some(v) = truth.and_then(|t| t.get(i - 1)) {
            let _ = write!(s, ", {v:e} with lines dashtype 2 title 'true {i}'");
        }
        let _ = writeln!(s);
    }
    let _ = writeln!(s, "unset multiplot");
    s
}
