//! The guide's code snippets must stay in sync with the crate's
//! doc-tests: every fenced Rust block in a book chapter has to appear,
//! line for line, inside the doc comments of its companion source file
//! (or the crate root). `cargo test` then guarantees the book compiles.

use std::fs;
use std::path::Path;

/// All fenced ```rust blocks of a markdown file, as normalized line lists.
fn book_snippets(path: &Path) -> Vec<Vec<String>> {
    let text = fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    let mut blocks = Vec::new();
    let mut current: Option<Vec<String>> = None;
    for line in text.lines() {
        let trimmed = line.trim();
        match &mut current {
            None if trimmed == "```rust" => current = Some(Vec::new()),
            Some(block) if trimmed == "```" => {
                let block = std::mem::take(block);
                current = None;
                let normalized: Vec<String> = block
                    .iter()
                    .map(|l| l.trim().to_string())
                    .filter(|l| !l.is_empty())
                    .collect();
                if !normalized.is_empty() {
                    blocks.push(normalized);
                }
            }
            Some(block) => block.push(line.to_string()),
            None => {}
        }
    }
    blocks
}

/// Doc-comment text of a source file: every `///` line with the marker
/// stripped, normalized the same way.
fn doc_lines(path: &Path) -> Vec<String> {
    let text = fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    text.lines()
        .filter_map(|l| {
            let t = l.trim_start();
            t.strip_prefix("//!").or_else(|| t.strip_prefix("///"))
        })
        .map(|l| l.trim().to_string())
        .filter(|l| !l.is_empty())
        .collect()
}

fn contains_contiguous(haystack: &[String], needle: &[String]) -> bool {
    if needle.is_empty() {
        return true;
    }
    haystack
        .windows(needle.len())
        .any(|w| w.iter().zip(needle.iter()).all(|(a, b)| a == b))
}

#[test]
fn every_book_snippet_is_a_doc_test() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR"));
    let book = root.join("../../book/src");
    let src = root.join("src");
    // Chapter -> source files whose doc comments may host its snippets.
    let pairs: [(&str, Vec<&str>); 7] = [
        ("model.md", vec!["model.rs"]),
        ("stationary.md", vec!["markov.rs"]),
        ("solving.md", vec!["solver.rs"]),
        ("capacity.md", vec!["lib.rs"]),
        ("simulation.md", vec!["lib.rs"]),
        ("fluid.md", vec!["fluid.rs"]),
        ("counterexamples.md", vec!["builders.rs"]),
    ];
    let mut checked = 0;
    for (chapter, sources) in pairs {
        let snippets = book_snippets(&book.join(chapter));
        let docs: Vec<Vec<String>> = sources.iter().map(|s| doc_lines(&src.join(s))).collect();
        for (i, snippet) in snippets.iter().enumerate() {
            assert!(
                docs.iter().any(|d| contains_contiguous(d, snippet)),
                "book/src/{chapter} snippet {i} is not a doc-test in {sources:?};\n\
                 first line: {:?}",
                snippet.first()
            );
            checked += 1;
        }
    }
    assert!(checked >= 7, "expected at least one snippet per chapter, found {checked}");
}
