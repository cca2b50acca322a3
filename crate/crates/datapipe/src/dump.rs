//! Wikipedia page sources: MediaWiki XML export or a directory of wikitext.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use quick_xml::events::Event;
use quick_xml::Reader;

use crate::error::{DataError, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Page {
    pub title: String,
    pub text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Field {
    Title,
    Ns,
    Text,
    Other,
}

/// Streams main-namespace pages out of an XML export one at a time.
pub struct XmlPages<R: BufRead> {
    reader: Reader<R>,
    path: PathBuf,
    buf: Vec<u8>,
    done: bool,
}

impl XmlPages<BufReader<File>> {
    pub fn open(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| DataError::io(path, e))?;
        Ok(Self::new(BufReader::new(file), path))
    }
}

impl<R: BufRead> XmlPages<R> {
    pub fn new(source: R, path: &Path) -> Self {
        XmlPages {
            reader: Reader::from_reader(source),
            path: path.to_path_buf(),
            buf: Vec::new(),
            done: false,
        }
    }


    fn next_page(&mut self) -> Result<Option<Page>> {
        let mut in_page = false;
        let mut field = Field::Other;
        let mut title = String::new();
        let mut ns = String::new();
        let mut text = String::new();
        loop {
            self.buf.clear();
            let event = self.reader.read_event_into(&mut self.buf).map_err(|e| xml_error(&self.path, &self.reader, e))?;
            match event {
                Event::Start(e) => match e.local_name().as_ref() {
                    b"page" => {
                        in_page = true;
                        title.clear();
                        ns.clear();
                        text.clear();
                    }
                    b"title" if in_page => field = Field::Title,
                    b"ns" if in_page => field = Field::Ns,
                    b"text" if in_page => field = Field::Text,
                    _ => field = Field::Other,
                },
                Event::Text(t) => {
                    let s = t.unescape().map_err(|e| xml_error(&self.path, &self.reader, e))?;
                    push_field(field, &s, &mut title, &mut ns, &mut text);
                }
                Event::CData(c) => {
                    let s = String::from_utf8_lossy(&c.into_inner()).into_owned();
                    push_field(field, &s, &mut title, &mut ns, &mut text);
                }
                Event::End(e) => {
                    field = Field::Other;
                    if e.local_name().as_ref() == b"page" && in_page {
                        in_page = false;
                        if ns.trim().is_empty() || ns.trim() == "0" {
                            return Ok(Some(Page {
                                title: std::mem::take(&mut title),
                                text: std::mem::take(&mut text),
                            }));
                        }
                    }
                }
                Event::Eof => {
                    if in_page {
                        return Err(xml_error(&self.path, &self.reader, "unterminated <page>"));
                    }
                    return Ok(None);
                }
                _ => {}
            }
        }
    }
}

fn xml_error<R>(path: &Path, reader: &Reader<R>, reason: impl std::fmt::Display) -> DataError {
    let pos = reader.buffer_position();
    DataError::parse(path, 0, format!("byte {pos}: {reason}"))
}

fn push_field(field: Field, s: &str, title: &mut String, ns: &mut String, text: &mut String) {
    match field {
        Field::Title => title.push_str(s),
        Field::Ns => ns.push_str(s),
        Field::Text => text.push_str(s),
        Field::Other => {}
    }
}

impl<R: BufRead> Iterator for XmlPages<R> {
    type Item = Result<Page>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        match self.next_page() {
            Ok(Some(p)) => Some(Ok(p)),
            Ok(None) => {
                self.done = true;
                None
            }
            Err(e) => {
                self.done = true;
                Some(Err(e))
            }
        }
    }
}

pub const WIKITEXT_EXTENSIONS: [&str; 3] = ["wiki", "wikitext", "txt"];

/// Pages from `*.wiki`, `*.wikitext` or `*.txt` files, sorted by file name.
/// The title is the file stem.
pub fn read_dir_pages(dir: &Path) -> Result<Vec<Page>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| DataError::io(dir, e))?
        .collect::<std::io::Result<Vec<_>>>()
        .map_err(|e| DataError::io(dir, e))?
        .into_iter()
        .map(|e| e.path())
        .filter(|p| {
            p.is_file()
                && p.extension()
                    .and_then(|x| x.to_str())
                    .is_some_and(|x| WIKITEXT_EXTENSIONS.contains(&x))
        })
        .collect();
    paths.sort();
    paths
        .into_iter()
        .map(|p| {
            let text = std::fs::read_to_string(&p).map_err(|e| DataError::io(&p, e))?;
            let title = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            Ok(Page { title, text })
        })
        .collect()
}

/// Page stream over either input kind.
pub fn open_pages(path: &Path) -> Result<Box<dyn Iterator<Item = Result<Page>>>> {
    if path.is_dir() {
        Ok(Box::new(read_dir_pages(path)?.into_iter().map(Ok)))
    } else {
        Ok(Box::new(XmlPages::open(path)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const DUMP: &str = r#"<mediawiki xmlns="http://www.mediawiki.org/xml/export-0.11/">
  <siteinfo><sitename>Wikipedia</sitename></siteinfo>
  <page>
    <title>Arnica montana</title>
    <ns>0</ns>
    <revision><id>1</id><text xml:space="preserve">{{Speciesbox|genus=Arnica|species=montana}} grows &amp; thrives &lt;ref&gt;x&lt;/ref&gt;</text></revision>
  </page>
  <page>
    <title>Talk:Arnica</title>
    <ns>1</ns>
    <revision><text>ignored</text></revision>
  </page>
  <page>
    <title>Empty</title>
    <ns>0</ns>
    <revision><text /></revision>
  </page>
</mediawiki>"#;

    #[test]
    fn xml_pages_in_order() {
        let pages: Vec<Page> = XmlPages::new(DUMP.as_bytes(), Path::new("d.xml")).collect::<Result<_>>().unwrap();
        assert_eq!(pages.len(), 2);
        assert_eq!(pages[0].title, "Arnica montana");
        assert_eq!(pages[0].text, "{{Speciesbox|genus=Arnica|species=montana}} grows & thrives <ref>x</ref>");
        assert_eq!(pages[1], Page { title: "Empty".into(), text: String::new() });
    }

    #[test]
    fn truncated_dump_is_error() {
        let cut = &DUMP[..DUMP.find("<title>Talk").unwrap()];
        let results: Vec<Result<Page>> = XmlPages::new(cut.as_bytes(), Path::new("d.xml")).collect();
        assert!(results[0].is_ok());
        assert!(results.last().unwrap().is_err());
    }

    #[test]
    fn directory_pages_sorted() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("b.wiki"), "B").unwrap();
        std::fs::write(dir.path().join("a.txt"), "A").unwrap();
        std::fs::write(dir.path().join("c.json"), "C").unwrap();
        let pages: Vec<Page> = open_pages(dir.path()).unwrap().collect::<Result<_>>().unwrap();
        assert_eq!(pages.iter().map(|p| p.title.as_str()).collect::<Vec<_>>(), ["a", "b"]);
    }
}
