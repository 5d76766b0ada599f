use fibidx_core::checks::{run, CheckSettings, Group, Report};
use std::io::Write;

const TITLES: [&str; 11] = [
    "winding corpus: Radul and Chern-Simons vs idempotent trace",
    "trace defect identity",
    "residue traciality and smoothing blindness",
    "zeta finite parts of 1 and D",
    "Fedosov laws",
    "residue formulas for the boundary cocycle on T2",
    "transgression for n = 1 and n = 3",
    "connecting map on finite nilpotent models",
    "idempotent trace well-definedness",
    "family index on T2 with frozen kappa",
    "index theorem rows (point and T2)",
];

fn print_report(r: &Report) -> std::io::Result<()> {
    let mut out = std::io::stdout().lock();
    writeln!(out, "kappa = {:?}", r.kappa)?;
    for (name, tol) in &r.tolerances {
        writeln!(out, "  tolerance {name:<16} {tol:.1e}")?;
    }
    for c in 1..=11u8 {
        let rows: Vec<_> = r.rows.iter().filter(|x| x.criterion == c).collect();
        let worst = rows.iter().map(|x| x.delta).fold(0.0, f64::max);
        let tol = rows.iter().map(|x| x.tolerance).fold(0.0, f64::max);
        let time = r.timings.iter().find(|t| t.criterion == c);
        let verdict = match r.criterion_pass(c) {
            Some(true) => "PASS",
            Some(false) => "FAIL",
            None => "MISSING",
        };
        let timing = time.map(|t| match t.budget {
            Some(b) => format!("  {:.2}s (budget {b:.0}s)", t.seconds),
            None => format!("  {:.2}s", t.seconds),
        });
        let mut tags: Vec<&str> = rows.iter().map(|x| x.tag.label()).collect();
        tags.sort_unstable();
        tags.dedup();
        writeln!(
            out,
            "criterion {c:>2} {verdict:<4} max delta {worst:.3e} (tol {tol:.1e}) rows {:>3} [{}]{}  {}",
            rows.len(),
            tags.join(","),
            timing.unwrap_or_default(),
            TITLES[c as usize - 1]
        )?;
        for x in rows.iter().filter(|x| !x.pass) {
            writeln!(out, "    failing row {} [{}]: delta {:.3e} > {:.1e} {:?}", x.name, x.tag.label(), x.delta, x.tolerance, x.note)?;
        }
    }
    out.flush()
}

#[test]
fn acceptance_criteria() {
    let s = CheckSettings::default();
    let r = run(&s, &Group::all());
    print_report(&r).unwrap();
    let theorem: Vec<_> = r.rows.iter().filter(|x| x.theorem_check).map(|x| x.criterion).collect();
    assert!(theorem.contains(&1) && theorem.contains(&10), "theorem rows must come from criteria 1 and 10");
    assert!(r.kappa.is_some_and(|k| (k - 1.0).abs() < 1e-12), "κ is frozen from the unit shift");
    let failing: Vec<u8> = (1..=11).filter(|c| r.criterion_pass(*c) != Some(true)).collect();
    assert!(failing.is_empty(), "failing criteria: {failing:?}");
}
