//! Semantic similarity between the class names of two label sets.
//!
//! With a word2vec table (`.bin` or text) the pairwise mean cosine is
//! computed over real embeddings; without one, a toy table shows the API.
//!
//! ```text
//! cargo run --release --example similarity -- [embeddings_path]
//! ```

use std::path::Path;

use zdda::datasets::Family;
use zdda::eval::similarity::label_words;
use zdda::eval::{semantic_similarity, EmbeddingTable};

fn main() -> zdda::Result<()> {
    let mnist = Family::Mnist.class_names();
    let fashion = Family::Fashion.class_names();
    let table = match std::env::args().nth(1) {
        Some(path) => {
            let words = label_words(mnist.iter().chain(&fashion).map(String::as_str).chain(["cat", "dog"]));
            EmbeddingTable::load(Path::new(&path), Some(&words))?
        }
        None => {
            println!("no embedding table given, using a toy table");
            EmbeddingTable::from_vectors([
                ("cat".to_string(), vec![0.9, 0.3, 0.1]),
                ("dog".to_string(), vec![0.8, 0.45, 0.05]),
                ("coat".to_string(), vec![-0.2, 0.1, 0.95]),
            ])?
        }
    };
    println!("{} words of dimension {}", table.len(), table.dim());
    let cat_dog = semantic_similarity(&["cat".into()], &["dog".into()], &table)?;
    println!("S(cat, dog) = {cat_dog:.4}");
    if table.get("zero").is_some() {
        println!("S(MNIST, Fashion) = {:.4}", semantic_similarity(&mnist, &fashion, &table)?);
    }
    Ok(())
}
