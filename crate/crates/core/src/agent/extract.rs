/// Contents of every fenced block (```` ``` ````, optional language tag), in
/// order. An unterminated final fence runs to the end of the text.
pub fn fenced_blocks(text: &str) -> Vec<String> {
    let mut blocks = Vec::new();
    let mut current: Option<Vec<&str>> = None;
    for line in text.lines() {
        let is_fence = line.trim_start().starts_with("```");
        match (&mut current, is_fence) {
            (None, true) => current = Some(Vec::new()),
            (Some(lines), true) => {
                blocks.push(join(lines));
                current = None;
            }
            (Some(lines), false) => lines.push(line),
            (None, false) => {}
        }
    }
    if let Some(lines) = current {
        if !lines.is_empty() {
            blocks.push(join(&lines));
        }
    }
    blocks
}

fn join(lines: &[&str]) -> String {
    let mut s = lines.join("\n");
    s.push('\n');
    s
}

/// Program text from a completion: the fenced blocks joined, or the whole
/// completion when it has none. Always ends with a newline unless empty.
pub fn extract_code(completion: &str) -> String {
    let blocks = fenced_blocks(completion);
    let mut code = if blocks.is_empty() {
        completion.to_string()
    } else {
        blocks.concat()
    };
    if !code.is_empty() && !code.ends_with('\n') {
        code.push('\n');
    }
    code
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plain_completion_is_kept() {
        assert_eq!(extract_code("x = 1"), "x = 1\n");
        assert_eq!(extract_code(""), "");
    }

    #[test]
    fn fences_are_stripped_and_joined() {
        let text = "Here:\n```python\na = 1\n```\nand\n```\nb = 2\n```\n";
        assert_eq!(fenced_blocks(text), vec!["a = 1\n", "b = 2\n"]);
        assert_eq!(extract_code(text), "a = 1\nb = 2\n");
    }

    #[test]
    fn unterminated_fence_runs_to_end() {
        assert_eq!(fenced_blocks("```py\nc = 3"), vec!["c = 3\n"]);
        assert!(fenced_blocks("no code").is_empty());
    }
}
