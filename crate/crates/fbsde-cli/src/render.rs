//! Human-readable rendering helpers: 6-significant-digit number
//! formatting and verdict pretty-printing.

use fbsde_core::{Decision, Relation, Verdict};

/// Formats with at most 6 significant digits, switching to scientific
/// notation outside `[1e-4, 1e6)`. Trailing zeros after the decimal
/// point are trimmed.
pub fn fmt6(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    if !v.is_finite() {
        return format!("{v}");
    }
    let a = v.abs();
    if (1e-4..1e6).contains(&a) {
        let mag = a.log10().floor() as i32;
        let dec = (5 - mag).max(0) as usize;
        let s = format!("{v:.dec$}");
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    } else {
        format!("{v:.5e}")
    }
}

fn relation_text(r: Relation) -> &'static str {
    match r {
        Relation::Positive => "> 0",
        Relation::NonNegative => ">= 0",
        Relation::NonPositive => "<= 0",
        Relation::Negative => "< 0",
        Relation::NonZero => "!= 0",
        Relation::Info => "",
    }
}

/// Appends a rendered verdict: stage, decision, firing criterion and
/// every evidence line.
pub fn verdict_block(out: &mut String, stage: &str, v: &Verdict) {
    let status = match v.decided {
        Decision::WellPosed => "well-posed",
        Decision::NotDecided => "not decided",
        Decision::ExcludedInput => "excluded input",
    };
    out.push_str(&format!("  [{stage}] {status}"));
    if let Some(c) = &v.criterion {
        out.push_str(&format!(" via {c}"));
    }
    out.push('\n');
    for e in &v.evidence {
        let rel = relation_text(e.relation);
        if rel.is_empty() {
            out.push_str(&format!("      {} = {}\n", e.name, fmt6(e.value)));
        } else {
            out.push_str(&format!("      {} = {} (want {rel})\n", e.name, fmt6(e.value)));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fmt6_ranges() {
        assert_eq!(fmt6(0.0), "0");
        assert_eq!(fmt6(1.55), "1.55");
        assert_eq!(fmt6(-3.2407111425665236), "-3.24071");
        assert_eq!(fmt6(123456.7), "123457");
        assert_eq!(fmt6(0.000123456), "0.000123456");
        assert_eq!(fmt6(1.0e-6), "1.00000e-6");
        assert_eq!(fmt6(2.5e7), "2.50000e7");
        assert_eq!(fmt6(1.0), "1");
        assert_eq!(fmt6(-0.658), "-0.658");
    }

    #[test]
    fn verdict_rendering_contains_criterion_and_evidence() {
        use fbsde_core::Evidence;
        let v = Verdict::well_posed(
            "Lemma3.8(i)",
            vec![Evidence::new("L(h)", 6.6, Relation::Positive)],
        );
        let mut out = String::new();
        verdict_block(&mut out, "root-criterion", &v);
        assert!(out.contains("root-criterion"));
        assert!(out.contains("well-posed"));
        assert!(out.contains("Lemma3.8(i)"));
        assert!(out.contains("L(h) = 6.6 (want > 0)"));
    }
}
