//! Pick the sentences of a mixed corpus that look like the in-domain
//! text, by cross-entropy difference, and compare subset perplexities.

use taptype::lm::{select_corpus, Corpus, SelectionConfig};
use taptype::DESK_CORPUS;

fn main() -> taptype::Result<()> {
    let desk = Corpus::from_text(DESK_CORPUS);
    // in-domain stand-in: conversational sentences addressed to "you";
    // half of them train the in-domain model, the rest hide in the pool
    let lines: Vec<&str> = DESK_CORPUS.lines().collect();
    let (about, rest): (Vec<&str>, Vec<&str>) = lines.iter().partition(|l| l.split(' ').any(|w| w == "you"));
    let in_domain = Corpus::from_text(&about[..about.len() / 2].join("\n"));
    let query = Corpus::from_text(&[&about[about.len() / 2..], &rest[..]].concat().join("\n"));
    println!("desk corpus {} sentences; pool {} sentences", desk.len(), query.len());

    let config = SelectionConfig { rank_subsets: true, ..SelectionConfig::default() };
    let selection = select_corpus(&query, &[in_domain], &[0.5, 0.0, -0.5, f64::NEG_INFINITY], &config)?;
    println!("mixture weights {:?}", selection.weights);
    for s in &selection.subsets {
        let ppl = s.heldout_perplexity.map_or("-".to_owned(), |p| format!("{p:.1}"));
        println!("threshold {:>6}: {:>6} sentences, held-out perplexity {ppl}", s.threshold, s.indices.len());
    }
    if let Some(best) = selection.best_subset() {
        println!("best threshold {}", best.threshold);
    }
    Ok(())
}
