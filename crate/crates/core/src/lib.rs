pub mod canonical;
pub mod chaincode;
pub mod cid;
pub mod credential;
pub mod crypto;
pub mod dag;
pub mod deployment;
pub mod did;
pub mod ledger;
pub mod portal;
pub mod scenario;
pub mod swarm;
