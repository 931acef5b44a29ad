use std::io::BufReader;

use taptype::lm::{read_arpa, Corpus, Vocab, WordLm, WordLmConfig};

const LN_10: f64 = std::f64::consts::LN_10;

fn fixture() -> taptype::lm::BackoffModel {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/tiny_words.kenlm.o4.arpa");
    read_arpa(BufReader::new(std::fs::File::open(path).unwrap())).unwrap()
}

fn ours() -> WordLm {
    let corpus = Corpus::load(concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/tiny_words.txt")).unwrap();
    WordLm::train(&corpus, &WordLmConfig::default()).unwrap()
}

#[test]
fn tables_match_reference_toolkit() {
    let reference = fixture();
    let lm = ours();
    let model = lm.model();
    for n in 1..=4 {
        assert_eq!(reference.count(n), model.count(n), "{n}-gram count");
        for (gram, expected) in reference.ngrams(n) {
            let words: Vec<&str> = gram.iter().map(|&t| reference.vocab().token(t)).collect();
            let ids: Vec<u32> = words.iter().map(|w| model.vocab().id(w).unwrap()).collect();
            let got = model.entry(&ids).unwrap_or_else(|| panic!("missing {words:?}"));
            if words != ["<s>"] {
                assert!(
                    ((got.log_prob - expected.log_prob) / LN_10).abs() < 1e-4,
                    "{words:?}: {} vs {}",
                    got.log_prob / LN_10,
                    expected.log_prob / LN_10
                );
            }
            assert!(((got.backoff - expected.backoff) / LN_10).abs() < 1e-4, "{words:?} backoff: {} vs {}", got.backoff / LN_10, expected.backoff / LN_10);
        }
    }
}

#[test]
fn sentence_scores_match_reference_toolkit() {
    let reference = fixture();
    let lm = ours();
    for sentence in ["the cat sat on the mat", "a bird ran to the log", "the zebra sat", "dog dog dog"] {
        let words: Vec<String> = sentence.split(' ').map(String::from).collect();
        let ours: f64 = lm.token_log_probs(&words, true).iter().sum();
        let mut ctx = vec![Vocab::BOS_ID];
        let mut theirs = 0.0;
        for w in words.iter().map(String::as_str).chain(["</s>"]) {
            let id = reference.vocab().id_or_unk(w).unwrap();
            theirs += reference.log_prob(&ctx, id);
            ctx.push(id);
        }
        assert!(((ours - theirs) / LN_10).abs() < 1e-4, "{sentence}: {ours} vs {theirs}");
    }
}
