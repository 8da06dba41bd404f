//! Corpus synthesis: a morphotactic grammar, generation with a known
//! gold analysis per type, and protocol-style splits written to disk.
//!
//! ```bash
//! cargo run -p morsel --example synthesize_corpus
//! ```

use morsel::synth::{demo_grammar, generate, split, SynthGrammar};

fn main() -> morsel::Result<()> {
    // A small grammar written by hand in the grammar TSV format.
    let grammar = SynthGrammar::parse_str(
        "root\tROOT:NOUN\ttak\t1\n\
         root\tROOT:NOUN\tpol\t1\n\
         root\tROOT:NOUN\tgem\t1\n\
         suffix\tSUFFIX:INFL:NOUN:NUMBER:PLURAL\tler\t1\n\
         suffix\tSUFFIX:INFL:NOUN:NUMBER:PLURAL\tlar\t1\n\
         suffix\tSUFFIX:INFL:NOUN:CASE:GENITIVE\tin\t1\n\
         attach\tSUFFIX:INFL:NOUN:NUMBER:PLURAL\t-\t0.6\n\
         attach\tSUFFIX:INFL:NOUN:CASE:GENITIVE\t-\t0.5\n\
         order\tNUMBER\tCASE\n",
    )?;
    let corpus = generate(&grammar, 10, 42)?;
    println!("ten types from the hand-written grammar:");
    print!("{}", corpus.dataset().serialize());

    // The generator is its own oracle.
    let word = &corpus.dataset().entries()[0].word;
    let views = corpus.oracle_views(word)?;
    println!(
        "oracle views of {word}: roots=[{}] stem={} bundle={}",
        views.roots.join(" "),
        views.stem,
        views.morph_tag.join(":")
    );

    // The bundled demonstration grammar, split 8:1:1:2 and written out.
    let demo = demo_grammar();
    let corpus = generate(&demo, 1200, 1)?;
    let parts = split(corpus.dataset(), &[8, 1, 1, 2], 1)?;
    let dir = std::env::temp_dir().join("morsel-synth-example");
    std::fs::create_dir_all(&dir)?;
    std::fs::write(dir.join("grammar.tsv"), demo.to_tsv())?;
    for (part, name) in parts
        .iter()
        .zip(["train.tsv", "tune.tsv", "dev.tsv", "test.tsv"])
    {
        std::fs::write(dir.join(name), part.serialize())?;
        println!("{}: {} types", name, part.len());
    }
    std::fs::write(dir.join("affix.txt"), demo.gazetteer().canonical_string())?;
    std::fs::write(
        dir.join("dict.txt"),
        demo.root_dictionary().canonical_string(),
    )?;
    println!("corpus written to {}", dir.display());
    Ok(())
}
