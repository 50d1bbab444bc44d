use std::path::PathBuf;

use dialectid::metrics::{accuracy, f1_scores, load_cm, per_class_prf, render_text, ConfusionMatrix};

fn table(name: &str) -> ConfusionMatrix {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name);
    load_cm(path).unwrap()
}

fn near(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

#[test]
fn published_accuracies() {
    for (file, published) in [
        ("dsl_char.tsv", 0.205),
        ("dsl_word.tsv", 0.195),
        ("adi_lexical.tsv", 0.246),
        ("adi_ivector.tsv", 0.577),
        ("gdi_lexical.tsv", 0.263),
        ("gdi_ivector.tsv", 0.255),
    ] {
        let acc = accuracy(&table(file)).unwrap();
        assert!(near(acc, published, 0.0005), "{file}: {acc}");
    }
}

#[test]
fn exact_accuracy_fractions() {
    assert_eq!(accuracy(&table("adi_lexical.tsv")).unwrap(), 367.0 / 1492.0);
    assert_eq!(accuracy(&table("adi_ivector.tsv")).unwrap(), 861.0 / 1492.0);
    assert_eq!(accuracy(&table("gdi_lexical.tsv")).unwrap(), 957.0 / 3638.0);
    assert_eq!(f1_scores(&table("dsl_char.tsv")).unwrap().micro, 2864.0 / 14000.0);
}

#[test]
fn published_f1_scores() {
    for (file, macro_, weighted) in [
        ("dsl_char.tsv", 0.202, 0.202),
        ("dsl_word.tsv", 0.186, 0.186),
        ("adi_lexical.tsv", 0.204, 0.208),
        ("adi_ivector.tsv", 0.577, 0.574),
        ("gdi_lexical.tsv", 0.264, 0.263),
        ("gdi_ivector.tsv", 0.256, 0.256),
    ] {
        let f = f1_scores(&table(file)).unwrap();
        assert!(near(f.macro_, macro_, 0.001), "{file} macro {}", f.macro_);
        assert!(near(f.weighted, weighted, 0.001), "{file} weighted {}", f.weighted);
    }
}

#[test]
fn adi_lexical_per_class() {
    let m = table("adi_lexical.tsv");
    let per = per_class_prf(&m);
    let glf = m.labels().id("glf").unwrap();
    assert_eq!((per[glf].precision, per[glf].recall, per[glf].f1), (0.0, 0.0, 0.0));
    assert_eq!(per[glf].support, 250);
    let msa = &per[m.labels().id("msa").unwrap()];
    let (p, r) = (145.0 / 560.0, 145.0 / 262.0);
    assert_eq!(msa.precision, p);
    assert_eq!(msa.recall, r);
    assert!(near(msa.f1, 2.0 * p * r / (p + r), 1e-15));
    assert!(near(msa.f1, 0.3528, 5e-5));
}

#[test]
fn supports_match_row_sums() {
    let m = table("gdi_ivector.tsv");
    let supports: Vec<u64> = per_class_prf(&m).iter().map(|c| c.support).collect();
    assert_eq!(supports, vec![906, 939, 916, 877]);
    assert_eq!(m.total(), 3638);
}

#[test]
fn rendered_footers() {
    let m = table("adi_ivector.tsv");
    let text = render_text(&m, &m.report().unwrap());
    assert!(text.ends_with("accuracy=0.577 f1_micro=0.577 f1_macro=0.577 f1_weighted=0.574\n"), "{text}");
    let m = table("adi_lexical.tsv");
    let text = render_text(&m, &m.report().unwrap());
    assert!(text.ends_with("accuracy=0.246 f1_micro=0.246 f1_macro=0.204 f1_weighted=0.208\n"), "{text}");
}
