pub mod acl;
pub mod mqtt;
pub mod netsvc;
pub mod teds;
