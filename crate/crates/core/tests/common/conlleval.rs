//! Direct port of the conlleval perl counting loop.

/// conlleval's `endOfChunk`.
fn end_of_chunk(prev_tag: &str, tag: &str, prev_type: &str, ty: &str) -> bool {
    (prev_tag == "B" && tag == "B")
        || (prev_tag == "B" && tag == "O")
        || (prev_tag == "I" && tag == "B")
        || (prev_tag == "I" && tag == "O")
        || (prev_tag != "O" && prev_type != ty)
}

/// conlleval's `startOfChunk`.
fn start_of_chunk(prev_tag: &str, tag: &str, prev_type: &str, ty: &str) -> bool {
    (prev_tag == "B" && tag == "B")
        || (prev_tag == "I" && tag == "B")
        || (prev_tag == "O" && tag == "B")
        || (prev_tag == "O" && tag == "I")
        || (tag != "O" && prev_type != ty)
}

fn split(label: &str) -> (&str, &str) {
    match label.split_once('-') {
        Some((t, ty)) if t == "B" || t == "I" => (t, ty),
        _ => ("O", ""),
    }
}

/// Streams the sentences as conlleval does (a boundary between sentences
/// resets both chunk states) and returns (correct, found_gold, found_guessed).
pub fn conlleval_counts(gold: &[Vec<String>], pred: &[Vec<String>]) -> (usize, usize, usize) {
    let (mut correct, mut found_gold, mut found_guess) = (0, 0, 0);
    for (g_sent, p_sent) in gold.iter().zip(pred) {
        let (mut in_correct, mut last_gold, mut last_guess) = (false, ("O", ""), ("O", ""));
        for (g, p) in g_sent.iter().zip(p_sent).map(|(g, p)| (split(g), split(p))) {
            let end_gold = end_of_chunk(last_gold.0, g.0, last_gold.1, g.1);
            let end_guess = end_of_chunk(last_guess.0, p.0, last_guess.1, p.1);
            let start_gold = start_of_chunk(last_gold.0, g.0, last_gold.1, g.1);
            let start_guess = start_of_chunk(last_guess.0, p.0, last_guess.1, p.1);
            if in_correct {
                if end_gold && end_guess && last_gold.1 == last_guess.1 {
                    in_correct = false;
                    correct += 1;
                } else if end_gold != end_guess || g.1 != p.1 {
                    in_correct = false;
                }
            }
            if start_gold && start_guess && g.1 == p.1 {
                in_correct = true;
            }
            if start_gold {
                found_gold += 1;
            }
            if start_guess {
                found_guess += 1;
            }
            last_gold = g;
            last_guess = p;
        }
        if in_correct {
            correct += 1;
        }
    }
    (correct, found_gold, found_guess)
}
