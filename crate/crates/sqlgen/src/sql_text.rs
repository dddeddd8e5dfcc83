//! Space-separated SQL token strings, with double quotes around values
//! that contain spaces: `select movie.name from movie where
//! movie.director = "Jackie Chan" EOS`.

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unterminated quote starting at byte {0}")]
pub struct UnterminatedQuote(pub usize);

pub fn split_sql(text: &str) -> Result<Vec<String>, UnterminatedQuote> {
    let mut out = Vec::new();
    let mut rest = text.trim_start();
    let mut offset = text.len() - rest.len();
    while !rest.is_empty() {
        let (token, used) = if let Some(body) = rest.strip_prefix('"') {
            let end = body.find('"').ok_or(UnterminatedQuote(offset))?;
            (&body[..end], end + 2)
        } else {
            let end = rest.find(char::is_whitespace).unwrap_or(rest.len());
            (&rest[..end], end)
        };
        out.push(token.to_string());
        let next = rest[used..].trim_start();
        offset += rest.len() - next.len();
        rest = next;
    }
    Ok(out)
}

pub fn join_sql<S: AsRef<str>>(tokens: &[S]) -> String {
    tokens
        .iter()
        .map(|t| {
            let t = t.as_ref();
            if t.contains(char::is_whitespace) {
                format!("\"{t}\"")
            } else {
                t.to_string()
            }
        })
        .collect::<Vec<_>>()
        .join(" ")
}
