//! NCAP side: a TEDS repository answering read-TEDS commands.

use std::collections::HashMap;

use p1451_core::mqtt::{TopicFilter, TopicName};
use p1451_core::netsvc::{
    command_topic, decode_command, encode_reply, error_code, reply_topic, ReadTedsCommand, ReadTedsReply, Uuid1451,
};
use p1451_core::teds::{decode_security_teds, RawTedsBlock, TedsError, SECURITY_TEDS_ACCESS_CODE};
use tracing::{info, warn};

use crate::client::{ClientOptions, Message};
use crate::service::{self, Handler, ServiceHandle};

/// `(timId, channelId, accessCode)`. NCAP-level TEDS live under a zero
/// TIM id and channel 0.
pub type TedsKey = (Uuid1451, u16, u8);

#[derive(Debug, Clone, Default)]
pub struct TedsRepository {
    blocks: HashMap<TedsKey, RawTedsBlock>,
}

impl TedsRepository {
    pub fn new() -> Self {
        Self::default()
    }

    /// Stores `block`, replacing any previous one under the same key.
    /// Security TEDS must decode cleanly; other access codes are opaque.
    pub fn register(
        &mut self,
        tim_id: Uuid1451,
        channel_id: u16,
        access_code: u8,
        block: RawTedsBlock,
    ) -> Result<(), TedsError> {
        if access_code == SECURITY_TEDS_ACCESS_CODE {
            decode_security_teds(block.as_bytes())?;
        }
        self.blocks.insert((tim_id, channel_id, access_code), block);
        Ok(())
    }

    pub fn get(&self, key: &TedsKey) -> Option<&RawTedsBlock> {
        self.blocks.get(key)
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }
}

pub fn handle_read_teds(cmd: &ReadTedsCommand, repo: &TedsRepository, ncap_id: &Uuid1451) -> ReadTedsReply {
    if cmd.ncap_id != *ncap_id {
        return ReadTedsReply::error_for(cmd, error_code::UNKNOWN_TIM_OR_CHANNEL);
    }
    let Some(block) = repo.get(&(cmd.tim_id, cmd.channel_id, cmd.teds_access_code)) else {
        return ReadTedsReply::error_for(cmd, error_code::TEDS_NOT_FOUND);
    };
    let offset = cmd.teds_offset as usize;
    if offset >= block.len() {
        return ReadTedsReply::error_for(cmd, error_code::INVALID_OFFSET);
    }
    ReadTedsReply {
        raw_teds_block: block.as_bytes()[offset..].to_vec(),
        ..ReadTedsReply::error_for(cmd, error_code::SUCCESS)
    }
}

struct NcapHandler {
    ncap_id: Uuid1451,
    repo: TedsRepository,
}

impl Handler for NcapHandler {
    async fn handle(&mut self, msg: Message) -> Vec<(TopicName, Vec<u8>)> {
        let cmd = match decode_command(&msg.payload) {
            Ok(c) => c,
            Err(e) => {
                warn!(event = "malformed_command", topic = %msg.topic, error = %e, len = msg.payload.len());
                return Vec::new();
            }
        };
        let reply = handle_read_teds(&cmd, &self.repo, &self.ncap_id);
        info!(
            event = "read_teds",
            app_id = %cmd.app_id,
            access_code = cmd.teds_access_code,
            offset = cmd.teds_offset,
            error_code = reply.error_code,
        );
        match encode_reply(&reply) {
            Ok(bytes) => vec![(reply_topic(&cmd.app_id), bytes)],
            Err(e) => {
                warn!(event = "reply_encode_failed", error = %e);
                Vec::new()
            }
        }
    }
}

/// Subscribes to this NCAP's command topic and answers each command on the
/// requesting APP's reply topic.
pub fn serve(opts: ClientOptions, ncap_id: Uuid1451, repo: TedsRepository) -> ServiceHandle {
    let filter = TopicFilter::from(command_topic(&ncap_id));
    service::spawn("ncap", opts, filter, NcapHandler { ncap_id, repo })
}
