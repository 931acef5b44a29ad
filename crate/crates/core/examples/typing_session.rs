//! Drive the typing session with gesture events: taps, cycling through
//! suggestions, deleting and submitting.

use taptype::session::{taps_for, Session, SessionEvent};

fn main() -> taptype::Result<()> {
    let decoder = taptype::desk_decoder()?;
    let mut session = Session::new(decoder.clone());
    let show = |session: &mut Session, label: &str, event: SessionEvent| -> taptype::Result<()> {
        let r = session.handle(&event)?;
        println!(
            "{label:<10} committed {:?} pending {:?} suggestions {:?} cursor {} feedback {:?}",
            r.committed,
            r.pending_mask,
            r.suggestions.iter().take(4).collect::<Vec<_>>(),
            r.cursor,
            r.feedback
        );
        Ok(())
    };
    for word in ["the", "new", "city"] {
        for e in taps_for(&decoder, word)? {
            show(&mut session, "tap", e)?;
        }
        show(&mut session, "cycle", SessionEvent::Cycle)?;
        show(&mut session, "cycle", SessionEvent::Cycle)?;
        show(&mut session, "delete", SessionEvent::DeleteWord)?;
        for e in taps_for(&decoder, word)? {
            session.handle(&e)?;
        }
        show(&mut session, "space", SessionEvent::Space)?;
    }
    let r = session.handle(&SessionEvent::Space)?;
    println!("submitted {:?}", r.submitted);
    Ok(())
}
