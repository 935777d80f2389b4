use udnet::conllu::{parse_conllu, Document};
use udnet::scorer::{evaluate, pmi_from_accuracies, EvalReport};

const GOLD: &str = "# text = I don't know.
1\tI\tI\tPRON\tPRP\t_\t3\tnsubj\t_\t_
2-3\tdon't\t_\t_\t_\t_\t_\t_\t_\t_
2\tdo\tdo\tAUX\tVBP\t_\t4\taux\t_\t_
3\tn't\tnot\tPART\tRB\t_\t4\tadvmod\t_\t_
4\tknow\tknow\tVERB\tVB\t_\t0\troot\t_\tSpaceAfter=No
5\t.\t.\tPUNCT\t.\t_\t4\tpunct\t_\t_

";

fn doc(s: &str) -> Document {
    parse_conllu(s).unwrap()
}

fn close(a: f64, b: f64) {
    assert!((a - b).abs() < 1e-12, "{} != {}", a, b);
}

fn f1(correct: f64, gold: f64, system: f64) -> f64 {
    2.0 * correct / (gold + system)
}

fn report(gold: &str, system: &str) -> EvalReport {
    evaluate(&doc(gold), &doc(system), None).unwrap()
}

#[test]
fn token_split() {
    let system = "1\tI\tI\tPRON\tPRP\t_\t4\tnsubj\t_\t_
2\tdo\tdo\tAUX\tVBP\t_\t4\taux\t_\tSpaceAfter=No
3\tn't\tnot\tPART\tRB\t_\t4\tadvmod\t_\t_
4\tknow\tknow\tVERB\tVB\t_\t0\troot\t_\tSpaceAfter=No
5\t.\t.\tPUNCT\t.\t_\t4\tpunct\t_\t_

";
    let r = report(GOLD, system);
    // tokens: I, know, . match out of 4 gold / 5 system
    close(r.tokens.f1, f1(3.0, 4.0, 5.0));
    // words inside the split token stay unaligned
    close(r.words.f1, f1(3.0, 5.0, 5.0));
    close(r.sentences.f1, 1.0);
    // I -> know is wrong in gold (head 3 = n't) vs system head know; know and . are right
    close(r.uas.f1, f1(2.0, 5.0, 5.0));
}

#[test]
fn token_merge() {
    let system = "1\tI\tI\tPRON\tPRP\t_\t3\tnsubj\t_\t_
2-3\tdon't\t_\t_\t_\t_\t_\t_\t_\t_
2\tdo\tdo\tAUX\tVBP\t_\t4\taux\t_\t_
3\tn't\tnot\tPART\tRB\t_\t4\tadvmod\t_\t_
4\tknow.\tknow\tVERB\tVB\t_\t0\troot\t_\t_

";
    let r = report(GOLD, system);
    close(r.tokens.f1, f1(2.0, 4.0, 3.0));
    close(r.words.f1, f1(3.0, 5.0, 4.0));
    // do and n't attach to an unaligned head; I attaches to n't correctly
    close(r.uas.f1, f1(1.0, 5.0, 4.0));
}

#[test]
fn sentence_merge() {
    let gold2 = format!("{}{}", GOLD, GOLD.replace("# text = I don't know.\n", ""));
    let merged = "1\tI\tI\tPRON\tPRP\t_\t3\tnsubj\t_\t_
2-3\tdon't\t_\t_\t_\t_\t_\t_\t_\t_
2\tdo\tdo\tAUX\tVBP\t_\t4\taux\t_\t_
3\tn't\tnot\tPART\tRB\t_\t4\tadvmod\t_\t_
4\tknow\tknow\tVERB\tVB\t_\t0\troot\t_\tSpaceAfter=No
5\t.\t.\tPUNCT\t.\t_\t4\tpunct\t_\t_
6\tI\tI\tPRON\tPRP\t_\t8\tnsubj\t_\t_
7-8\tdon't\t_\t_\t_\t_\t_\t_\t_\t_
7\tdo\tdo\tAUX\tVBP\t_\t9\taux\t_\t_
8\tn't\tnot\tPART\tRB\t_\t9\tadvmod\t_\t_
9\tknow\tknow\tVERB\tVB\t_\t4\tparataxis\t_\tSpaceAfter=No
10\t.\t.\tPUNCT\t.\t_\t9\tpunct\t_\t_

";
    let r = report(&gold2, merged);
    close(r.sentences.f1, 0.0);
    close(r.tokens.f1, 1.0);
    close(r.words.f1, 1.0);
    // the second root is now a parataxis dependent
    close(r.uas.f1, f1(9.0, 10.0, 10.0));
}

#[test]
fn multiword_expansion_mismatch() {
    let system = GOLD.replace("3\tn't\tnot", "3\tnot\tnot");
    let r = report(GOLD, &system);
    close(r.tokens.f1, 1.0);
    // LCS inside the multi-word token aligns only "do"
    close(r.words.f1, f1(4.0, 5.0, 5.0));
    close(r.upos.aligned_accuracy.unwrap(), 1.0);
    close(r.upos.f1, f1(4.0, 5.0, 5.0));
}

#[test]
fn label_error() {
    let system = GOLD.replace("4\taux", "4\tcop").replace("3\tnsubj", "3\tobj");
    let r = report(GOLD, &system);
    close(r.uas.f1, 1.0);
    close(r.las.f1, 3.0 / 5.0);
    // content words: I (nsubj), n't (advmod), know (root); I is wrong
    close(r.clas.f1, 2.0 / 3.0);
    close(r.words.f1, 1.0);
}

#[test]
fn two_words_one_right_gives_half_las() {
    let gold = "1\ta\ta\tX\t_\t_\t2\tdep\t_\t_\n2\tb\tb\tX\t_\t_\t0\troot\t_\t_\n\n";
    let system = gold.replace("2\tdep", "2\tnsubj");
    close(report(gold, &system).las.f1, 0.5);
}

#[test]
fn all_tags_needs_every_tag() {
    let system = GOLD.replace("PRON\tPRP\t_", "PRON\tPRP\tCase=Nom");
    let r = report(GOLD, &system);
    close(r.upos.f1, 1.0);
    close(r.all_tags.f1, 4.0 / 5.0);
    assert!(r.all_tags.f1 <= r.upos.f1.min(r.xpos.f1).min(r.ufeats.f1));
}

#[test]
fn pmi_cases() {
    close(pmi_from_accuracies(0.9, 0.9, 0.9, 0.81).unwrap(), (0.81f64 / 0.729).ln());
    close(pmi_from_accuracies(0.8, 0.5, 0.5, 0.2).unwrap(), 0.0);
    close(pmi_from_accuracies(1.0, 1.0, 1.0, 1.0).unwrap(), 0.0);
}
