//! Minimal HTML parser for well-formed fragments with table or list markup.
//!
//! Tolerated deviations: void elements need no closing tag, unknown closing
//! tags are ignored, `li`/`td`/`th`/`tr`/`p`/`option` close implicitly when a
//! sibling opens, and elements still open at the end are closed.
//! `script` and `style` bodies are skipped.

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum HtmlError {
    #[error("unterminated tag at byte {0}")]
    UnterminatedTag(usize),
    #[error("unterminated comment at byte {0}")]
    UnterminatedComment(usize),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Node {
    Element(Element),
    Text(String),
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Element {
    pub tag: String,
    pub attrs: Vec<(String, String)>,
    pub children: Vec<Node>,
}

const VOID: &[&str] = &[
    "area", "base", "br", "col", "embed", "hr", "img", "input", "link", "meta", "source", "track", "wbr",
];

impl Element {
    pub fn attr(&self, name: &str) -> Option<&str> {
        self.attrs
            .iter()
            .find(|(k, _)| k == name)
            .map(|(_, v)| v.as_str())
    }

    pub fn child_elements(&self) -> impl Iterator<Item = &Element> {
        self.children.iter().filter_map(|c| match c {
            Node::Element(e) => Some(e),
            Node::Text(_) => None,
        })
    }

    /// Whitespace-collapsed text of all descendants.
    pub fn text(&self) -> String {
        let mut parts = Vec::new();
        collect_text(self, &mut parts);
        collapse(&parts.join(" "))
    }

    /// Depth-first visit of every element, this one included.
    pub fn walk<'a>(&'a self, f: &mut impl FnMut(&'a Element)) {
        f(self);
        for c in self.child_elements() {
            c.walk(f);
        }
    }
}

fn collect_text<'a>(e: &'a Element, out: &mut Vec<&'a str>) {
    for c in &e.children {
        match c {
            Node::Text(t) => out.push(t),
            Node::Element(e) => collect_text(e, out),
        }
    }
}

pub fn collapse(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

pub fn decode_entities(s: &str) -> String {
    if !s.contains('&') {
        return s.to_string();
    }
    let mut out = String::with_capacity(s.len());
    let mut rest = s;
    while let Some(i) = rest.find('&') {
        out.push_str(&rest[..i]);
        rest = &rest[i..];
        let end = rest[1..].find(|c: char| c == ';' || c == '&' || c.is_whitespace()).map(|e| e + 1);
        let decoded = match end {
            Some(e) if rest.as_bytes().get(e) == Some(&b';') => {
                let name = &rest[1..e];
                let ch = match name {
                    "amp" => Some('&'),
                    "lt" => Some('<'),
                    "gt" => Some('>'),
                    "quot" => Some('"'),
                    "apos" => Some('\''),
                    "nbsp" => Some(' '),
                    _ if name.starts_with("#x") || name.starts_with("#X") => {
                        u32::from_str_radix(&name[2..], 16).ok().and_then(char::from_u32)
                    }
                    _ if name.starts_with('#') => name[1..].parse().ok().and_then(char::from_u32),
                    _ => None,
                };
                ch.map(|c| (c, e + 1))
            }
            _ => None,
        };
        match decoded {
            Some((c, len)) => {
                out.push(c);
                rest = &rest[len..];
            }
            None => {
                out.push('&');
                rest = &rest[1..];
            }
        }
    }
    out.push_str(rest);
    out
}

fn implicitly_closed_by(open: &str, opening: &str) -> bool {
    match opening {
        "li" => open == "li",
        "td" | "th" => matches!(open, "td" | "th"),
        "tr" => matches!(open, "td" | "th" | "tr"),
        "tbody" | "thead" | "tfoot" => matches!(open, "td" | "th" | "tr" | "tbody" | "thead" | "tfoot"),
        "option" => open == "option",
        "p" | "div" | "ul" | "ol" | "table" => open == "p",
        _ => false,
    }
}

/// Elements that bound the search for an implicitly closed sibling.
fn is_scope_boundary(tag: &str) -> bool {
    matches!(tag, "table" | "ul" | "ol" | "select" | "#document")
}

struct Builder {
    stack: Vec<Element>,
}

impl Builder {
    fn close_top(&mut self) {
        let e = self.stack.pop().expect("never pops the document");
        self.stack
            .last_mut()
            .expect("document stays on the stack")
            .children
            .push(Node::Element(e));
    }

    fn open(&mut self, el: Element, self_closing: bool) {
        // pop implicitly closed siblings, staying inside the current scope
        while self.stack.len() > 1 {
            let top = &self.stack.last().unwrap().tag;
            if implicitly_closed_by(top, &el.tag) {
                self.close_top();
            } else {
                break;
            }
        }
        let void = self_closing || VOID.contains(&el.tag.as_str());
        self.stack.push(el);
        if void {
            self.close_top();
        }
    }

    fn close(&mut self, tag: &str) {
        let Some(pos) = self.stack.iter().rposition(|e| e.tag == tag) else {
            return;
        };
        if pos == 0 {
            return;
        }
        // do not close across a scope boundary for implicit-close tags
        if self.stack[pos + 1..].iter().any(|e| is_scope_boundary(&e.tag)) && !is_scope_boundary(tag) {
            return;
        }
        while self.stack.len() > pos {
            self.close_top();
        }
    }

    fn text(&mut self, raw: &str) {
        let t = collapse(&decode_entities(raw));
        if !t.is_empty() {
            self.stack.last_mut().unwrap().children.push(Node::Text(t));
        }
    }
}

fn parse_attrs(s: &str) -> Vec<(String, String)> {
    let mut attrs = Vec::new();
    let mut rest = s.trim();
    while !rest.is_empty() {
        let name_end = rest
            .find(|c: char| c == '=' || c.is_whitespace())
            .unwrap_or(rest.len());
        let name = rest[..name_end].to_ascii_lowercase();
        rest = rest[name_end..].trim_start();
        let mut value = String::new();
        if let Some(r) = rest.strip_prefix('=') {
            let r = r.trim_start();
            let (v, remaining) = match r.chars().next() {
                Some(q @ ('"' | '\'')) => match r[1..].find(q) {
                    Some(e) => (&r[1..e + 1], &r[e + 2..]),
                    None => (&r[1..], ""),
                },
                _ => {
                    let e = r.find(char::is_whitespace).unwrap_or(r.len());
                    (&r[..e], &r[e..])
                }
            };
            value = decode_entities(v);
            rest = remaining.trim_start();
        }
        if !name.is_empty() && name != "/" {
            attrs.push((name, value));
        }
    }
    attrs
}

/// Parses a document into a tree rooted at a synthetic `#document` element.
pub fn parse(input: &str) -> Result<Element, HtmlError> {
    let mut b = Builder {
        stack: vec![Element {
            tag: "#document".into(),
            ..Default::default()
        }],
    };
    let bytes = input.as_bytes();
    let mut i = 0;
    while i < input.len() {
        let Some(off) = input[i..].find('<') else {
            b.text(&input[i..]);
            break;
        };
        if off > 0 {
            b.text(&input[i..i + off]);
        }
        let start = i + off;
        let rest = &input[start..];
        if rest.starts_with("<!--") {
            let end = rest.find("-->").ok_or(HtmlError::UnterminatedComment(start))?;
            i = start + end + 3;
            continue;
        }
        let next = bytes.get(start + 1).copied();
        let is_tag = matches!(next, Some(c) if c.is_ascii_alphabetic() || c == b'/' || c == b'!' || c == b'?');
        if !is_tag {
            // a stray `<` is text
            b.text("<");
            i = start + 1;
            continue;
        }
        let end = rest.find('>').ok_or(HtmlError::UnterminatedTag(start))?;
        let inner = &rest[1..end];
        i = start + end + 1;
        if inner.starts_with('!') || inner.starts_with('?') {
            continue;
        }
        if let Some(name) = inner.strip_prefix('/') {
            b.close(&name.trim().to_ascii_lowercase());
            continue;
        }
        let self_closing = inner.ends_with('/');
        let inner = inner.trim_end_matches('/');
        let name_end = inner.find(char::is_whitespace).unwrap_or(inner.len());
        let tag = inner[..name_end].to_ascii_lowercase();
        let attrs = parse_attrs(&inner[name_end..]);
        if tag == "script" || tag == "style" {
            let close = format!("</{tag}");
            let lower = input[i..].to_ascii_lowercase();
            match lower.find(&close) {
                Some(e) => {
                    let after = i + e;
                    let gt = input[after..].find('>').ok_or(HtmlError::UnterminatedTag(after))?;
                    i = after + gt + 1;
                }
                None => i = input.len(),
            }
            continue;
        }
        b.open(
            Element {
                tag,
                attrs,
                children: Vec::new(),
            },
            self_closing,
        );
    }
    while b.stack.len() > 1 {
        b.close_top();
    }
    Ok(b.stack.pop().unwrap())
}
