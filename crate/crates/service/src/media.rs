//! Upload sniffing.

use tonebridge_core::trace::MediaKind;

/// Identifies an upload by its leading bytes. Returns the kind and the file
/// extension used to store it.
pub fn sniff(bytes: &[u8]) -> Option<(MediaKind, &'static str)> {
    if bytes.starts_with(b"\x89PNG\r\n\x1a\n") {
        return Some((MediaKind::Image, "png"));
    }
    if bytes.starts_with(&[0xff, 0xd8, 0xff]) {
        return Some((MediaKind::Image, "jpg"));
    }
    if bytes.len() >= 12 && &bytes[4..8] == b"ftyp" {
        return Some((MediaKind::Video, "mp4"));
    }
    if bytes.starts_with(&[0x1a, 0x45, 0xdf, 0xa3]) {
        return Some((MediaKind::Video, "webm"));
    }
    if bytes.len() >= 12 && bytes.starts_with(b"RIFF") && &bytes[8..12] == b"AVI " {
        return Some((MediaKind::Video, "avi"));
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_signatures() {
        assert_eq!(
            sniff(&tonebridge_core::testutil::red_pixel_png()),
            Some((MediaKind::Image, "png"))
        );
        assert_eq!(sniff(b"\xff\xd8\xff\xe0rest"), Some((MediaKind::Image, "jpg")));
        assert_eq!(sniff(b"\0\0\0\x18ftypisom...."), Some((MediaKind::Video, "mp4")));
        assert_eq!(sniff(b"RIFF\0\0\0\0AVI LIST"), Some((MediaKind::Video, "avi")));
        assert_eq!(sniff(b"RIFF\0\0\0\0WAVEfmt "), None);
        assert_eq!(sniff(b""), None);
        assert_eq!(sniff(b"GIF89a"), None);
    }
}
