//! Atom entries and feeds for the discovery registry.
//!
//! An engine entry carries three enclosure links (`functional`,
//! `management`, `ping`) and its dialect and replica group as categories.
//! A translator entry carries exactly one enclosure.

use std::fmt::{self, Write};
use std::str::FromStr;

use chrono::{DateTime, SecondsFormat, Utc};
use quick_xml::escape::escape;
use rulemesh_core::{Code, DialectId, Diagnostic};
use serde::{Deserialize, Serialize};
use uuid::Uuid;

pub const ATOM_NS: &str = "http://www.w3.org/2005/Atom";
pub const DIALECT_SCHEME: &str = "urn:rulemesh:dialect";
pub const GROUP_SCHEME: &str = "urn:rulemesh:replica-group";
pub const ENGINE_LINKS: [&str; 3] = ["functional", "management", "ping"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Collection {
    Engines,
    Translators,
}

impl Collection {
    pub const ALL: [Collection; 2] = [Collection::Engines, Collection::Translators];

    pub fn as_str(self) -> &'static str {
        match self {
            Collection::Engines => "engines",
            Collection::Translators => "translators",
        }
    }
}

impl fmt::Display for Collection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Collection {
    type Err = Diagnostic;

    fn from_str(s: &str) -> Result<Self, Diagnostic> {
        Collection::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Diagnostic::new(Code::ENotFound, format!("no collection {s:?}")))
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Author {
    pub name: String,
    pub uri: Option<String>,
    pub email: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Enclosure {
    pub title: String,
    pub href: String,
    pub media_type: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Category {
    pub scheme: String,
    pub term: String,
}

/// One registry entry. `id`, `published` and `updated` are assigned by the
/// registry and absent in entries submitted for creation.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Entry {
    pub id: Option<Uuid>,
    pub title: String,
    pub published: Option<DateTime<Utc>>,
    pub updated: Option<DateTime<Utc>>,
    pub author: Author,
    pub enclosures: Vec<Enclosure>,
    pub categories: Vec<Category>,
}

fn bad(detail: impl Into<String>) -> Diagnostic {
    Diagnostic::new(Code::EBadRequest, detail)
}

pub fn timestamp(t: &DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::Millis, true)
}

pub fn urn(id: &Uuid) -> String {
    format!("urn:uuid:{id}")
}

/// Accepts a bare UUID or its `urn:uuid:` form.
pub fn parse_id(s: &str) -> Option<Uuid> {
    let bare = s.strip_prefix("urn:uuid:").unwrap_or(s);
    Uuid::parse_str(bare).ok()
}

impl Entry {
    /// An engine entry as an engine registers itself.
    pub fn engine(title: &str, base_url: &str, dialect: DialectId, replica_group: Option<&str>) -> Self {
        let base = base_url.trim_end_matches('/');
        let mut categories = vec![Category { scheme: DIALECT_SCHEME.into(), term: dialect.as_str().into() }];
        if let Some(g) = replica_group {
            categories.push(Category { scheme: GROUP_SCHEME.into(), term: g.into() });
        }
        Entry {
            title: title.into(),
            author: Author { name: title.into(), uri: Some(base.into()), email: None },
            enclosures: ENGINE_LINKS
                .iter()
                .map(|t| Enclosure { title: (*t).into(), href: format!("{base}/{t}"), media_type: Some("application/json".into()) })
                .collect(),
            categories,
            ..Default::default()
        }
    }

    pub fn enclosure(&self, title: &str) -> Option<&str> {
        self.enclosures.iter().find(|e| e.title == title).map(|e| e.href.as_str())
    }

    pub fn category(&self, scheme: &str) -> Option<&str> {
        self.categories.iter().find(|c| c.scheme == scheme).map(|c| c.term.as_str())
    }

    pub fn dialect(&self) -> Option<DialectId> {
        self.category(DIALECT_SCHEME)?.parse().ok()
    }

    pub fn replica_group(&self) -> Option<&str> {
        self.category(GROUP_SCHEME)
    }

    /// Checks the link and category rules for entries of `collection`.
    pub fn validate(&self, collection: Collection) -> Result<(), Diagnostic> {
        if self.title.trim().is_empty() {
            return Err(bad("entry title is empty"));
        }
        if self.author.name.trim().is_empty() {
            return Err(bad("entry author name is empty"));
        }
        for e in &self.enclosures {
            match url::Url::parse(&e.href) {
                Ok(u) if u.has_host() => {}
                _ => return Err(bad(format!("enclosure {:?} href {:?} is not an absolute URL", e.title, e.href))),
            }
        }
        for scheme in [DIALECT_SCHEME, GROUP_SCHEME] {
            if self.categories.iter().filter(|c| c.scheme == scheme).count() > 1 {
                return Err(bad(format!("more than one category with scheme {scheme}")));
            }
        }
        if let Some(term) = self.category(DIALECT_SCHEME) {
            term.parse::<DialectId>()?;
        }
        match collection {
            Collection::Engines => {
                for t in ENGINE_LINKS {
                    match self.enclosures.iter().filter(|e| e.title == t).count() {
                        1 => {}
                        0 => return Err(bad(format!("missing enclosure link {t:?}"))),
                        _ => return Err(bad(format!("duplicate enclosure link {t:?}"))),
                    }
                }
                if let Some(e) = self.enclosures.iter().find(|e| !ENGINE_LINKS.contains(&e.title.as_str())) {
                    return Err(bad(format!("unexpected enclosure link {:?}", e.title)));
                }
                if self.dialect().is_none() {
                    return Err(bad(format!("missing category with scheme {DIALECT_SCHEME}")));
                }
            }
            Collection::Translators => {
                if self.enclosures.len() != 1 {
                    return Err(bad(format!("translator entries need exactly one enclosure link, found {}", self.enclosures.len())));
                }
            }
        }
        Ok(())
    }

    fn write(&self, out: &mut String, collection: Collection, indent: &str, standalone: bool) {
        let ns = if standalone { format!(" xmlns=\"{ATOM_NS}\"") } else { String::new() };
        let i = indent;
        let _ = writeln!(out, "{i}<entry{ns}>");
        if let Some(id) = &self.id {
            let _ = writeln!(out, "{i}  <id>{}</id>", urn(id));
        }
        if let Some(t) = &self.updated {
            let _ = writeln!(out, "{i}  <updated>{}</updated>", timestamp(t));
        }
        if let Some(t) = &self.published {
            let _ = writeln!(out, "{i}  <published>{}</published>", timestamp(t));
        }
        if let Some(id) = &self.id {
            let _ = writeln!(out, "{i}  <link rel=\"edit\" type=\"application/atom+xml\" href=\"{collection}/{id}\"/>");
        }
        for e in &self.enclosures {
            let ty = e.media_type.as_ref().map(|t| format!(" type=\"{}\"", escape(t.as_str()))).unwrap_or_default();
            let _ = writeln!(
                out,
                "{i}  <link rel=\"enclosure\"{ty} title=\"{}\" href=\"{}\"/>",
                escape(e.title.as_str()),
                escape(e.href.as_str())
            );
        }
        let _ = writeln!(out, "{i}  <title>{}</title>", escape(self.title.as_str()));
        let _ = writeln!(out, "{i}  <author>");
        let _ = writeln!(out, "{i}    <name>{}</name>", escape(self.author.name.as_str()));
        if let Some(u) = &self.author.uri {
            let _ = writeln!(out, "{i}    <uri>{}</uri>", escape(u.as_str()));
        }
        if let Some(e) = &self.author.email {
            let _ = writeln!(out, "{i}    <email>{}</email>", escape(e.as_str()));
        }
        let _ = writeln!(out, "{i}  </author>");
        for c in &self.categories {
            let _ = writeln!(out, "{i}  <category scheme=\"{}\" term=\"{}\"/>", escape(c.scheme.as_str()), escape(c.term.as_str()));
        }
        let _ = writeln!(out, "{i}</entry>");
    }

    /// A standalone entry document.
    pub fn to_xml(&self, collection: Collection) -> String {
        let mut out = String::from("<?xml version=\"1.0\" encoding=\"utf-8\"?>\n");
        self.write(&mut out, collection, "", true);
        out
    }

    fn from_node(node: roxmltree::Node) -> Result<Entry, Diagnostic> {
        if !node.has_tag_name((ATOM_NS, "entry")) {
            return Err(bad("expected an Atom <entry> element"));
        }
        let mut entry = Entry::default();
        let mut title = None;
        let mut author = None;
        for child in node.children().filter(|c| c.is_element() && c.tag_name().namespace() == Some(ATOM_NS)) {
            let text = || child.text().unwrap_or("").trim().to_owned();
            match child.tag_name().name() {
                "id" => {
                    entry.id = Some(parse_id(&text()).ok_or_else(|| bad(format!("entry id {:?} is not a urn:uuid", text())))?);
                }
                "updated" => entry.updated = Some(parse_time(&text())?),
                "published" => entry.published = Some(parse_time(&text())?),
                "title" => title = Some(text()),
                "author" => author = Some(parse_author(child)?),
                "link" => match child.attribute("rel") {
                    Some("enclosure") => entry.enclosures.push(Enclosure {
                        title: child.attribute("title").ok_or_else(|| bad("enclosure link without title"))?.to_owned(),
                        href: child.attribute("href").ok_or_else(|| bad("enclosure link without href"))?.to_owned(),
                        media_type: child.attribute("type").map(str::to_owned),
                    }),
                    // the edit link is derived from the id
                    _ => {}
                },
                "category" => entry.categories.push(Category {
                    scheme: child.attribute("scheme").unwrap_or("").to_owned(),
                    term: child.attribute("term").ok_or_else(|| bad("category without term"))?.to_owned(),
                }),
                _ => {}
            }
        }
        entry.title = title.ok_or_else(|| bad("entry has no title"))?;
        entry.author = author.ok_or_else(|| bad("entry has no author"))?;
        Ok(entry)
    }
}

fn parse_time(s: &str) -> Result<DateTime<Utc>, Diagnostic> {
    DateTime::parse_from_rfc3339(s)
        .map(|t| t.with_timezone(&Utc))
        .map_err(|e| bad(format!("bad timestamp {s:?}: {e}")))
}

fn parse_author(node: roxmltree::Node) -> Result<Author, Diagnostic> {
    let field = |name: &str| {
        node.children()
            .find(|c| c.has_tag_name((ATOM_NS, name)))
            .map(|c| c.text().unwrap_or("").trim().to_owned())
    };
    Ok(Author { name: field("name").ok_or_else(|| bad("author has no name"))?, uri: field("uri"), email: field("email") })
}

fn parse_doc(xml: &str) -> Result<roxmltree::Document<'_>, Diagnostic> {
    roxmltree::Document::parse(xml).map_err(|e| bad(format!("malformed XML: {e}")))
}

pub fn parse_entry(xml: &str) -> Result<Entry, Diagnostic> {
    let doc = parse_doc(xml)?;
    Entry::from_node(doc.root_element())
}

/// Entries of a feed document, in document order.
pub fn parse_feed(xml: &str) -> Result<Vec<Entry>, Diagnostic> {
    let doc = parse_doc(xml)?;
    let root = doc.root_element();
    if !root.has_tag_name((ATOM_NS, "feed")) {
        return Err(bad("expected an Atom <feed> element"));
    }
    root.children().filter(|c| c.has_tag_name((ATOM_NS, "entry"))).map(Entry::from_node).collect()
}

/// A feed document. `entries` must already be in feed order; the feed's own
/// `updated` is the newest entry's, so the document is a pure function of
/// its entries.
pub fn feed_xml(collection: Collection, entries: &[Entry]) -> String {
    let updated = entries.iter().filter_map(|e| e.updated).max().unwrap_or(DateTime::<Utc>::UNIX_EPOCH);
    let mut out = String::from("<?xml version=\"1.0\" encoding=\"utf-8\"?>\n");
    let _ = writeln!(out, "<feed xmlns=\"{ATOM_NS}\">");
    let _ = writeln!(out, "  <id>urn:rulemesh:registry:{collection}</id>");
    let _ = writeln!(out, "  <title>{collection}</title>");
    let _ = writeln!(out, "  <updated>{}</updated>", timestamp(&updated));
    let _ = writeln!(out, "  <link rel=\"self\" href=\"{collection}\"/>");
    for e in entries {
        e.write(&mut out, collection, "  ", false);
    }
    out.push_str("</feed>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const JESS: &str = r#"<entry xmlns="http://www.w3.org/2005/Atom">
  <link rel="enclosure" type="application/json" title="functional" href="http://h:1/functional"/>
  <link rel="enclosure" type="application/json" title="management" href="http://h:1/management"/>
  <link rel="enclosure" type="application/json" title="ping" href="http://h:1/ping"/>
  <title>jess.middleware</title>
  <author><name>ops</name><email>ops@example.org</email></author>
  <category scheme="urn:rulemesh:dialect" term="clips-mini"/>
</entry>"#;

    #[test]
    fn parses_submitted_entry() {
        let e = parse_entry(JESS).unwrap();
        assert_eq!(e.title, "jess.middleware");
        assert_eq!(e.enclosure("ping"), Some("http://h:1/ping"));
        assert_eq!(e.dialect(), Some(DialectId::ClipsMini));
        assert_eq!(e.replica_group(), None);
        assert_eq!(e.author.email.as_deref(), Some("ops@example.org"));
        e.validate(Collection::Engines).unwrap();
        assert!(e.validate(Collection::Translators).is_err());
    }

    #[test]
    fn serialization_round_trips() {
        let mut e = Entry::engine("a & <b>", "http://x:9/", DialectId::DrlMini, Some("g\"1"));
        e.id = Some(Uuid::new_v4());
        let t = Utc::now();
        e.published = Some(t);
        e.updated = Some(t);
        let back = parse_entry(&e.to_xml(Collection::Engines)).unwrap();
        assert_eq!(back.to_xml(Collection::Engines), e.to_xml(Collection::Engines));
        assert_eq!(back.title, "a & <b>");
        assert_eq!(back.replica_group(), Some("g\"1"));
        let feed = feed_xml(Collection::Engines, &[e.clone()]);
        assert_eq!(parse_feed(&feed).unwrap(), vec![back]);
    }

    #[test]
    fn missing_ping_is_rejected() {
        let xml = JESS.replace(r#"<link rel="enclosure" type="application/json" title="ping" href="http://h:1/ping"/>"#, "");
        let e = parse_entry(&xml).unwrap();
        assert!(e.validate(Collection::Engines).unwrap_err().detail.contains("ping"));
    }

    #[test]
    fn malformed_xml_is_a_bad_request() {
        assert_eq!(parse_entry("<entry").unwrap_err().code, Code::EBadRequest);
        assert_eq!(parse_entry("<entry/>").unwrap_err().code, Code::EBadRequest);
    }
}
