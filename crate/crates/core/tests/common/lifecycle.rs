//! Randomized end-to-end lifecycles with service restarts, checking the
//! accounting identities after every step.

use std::path::Path;
use std::sync::Arc;

use eft_core::api::Rejection;
use eft_core::fixtures::testbed::Testbed;
use eft_core::merchant::{HoldingStatus, MerchantService, OnwardRequest};
use eft_core::wallet::{TokenState, Wallet};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

#[derive(Debug, Default, Clone, Copy)]
pub struct Tally {
    pub steps: u32,
    pub payments: u32,
    pub onward: u32,
    pub redemptions: u32,
    pub restarts: u32,
}

struct Run {
    tb: Testbed,
    rng: ChaCha20Rng,
    claims: Vec<(String, u64)>,
    wallets: Vec<Wallet>,
    shops: Vec<Arc<MerchantService>>,
    supplier: Arc<MerchantService>,
    tally: Tally,
}

fn tolerate(r: Rejection, allowed: &[&str], what: &str) -> Result<(), String> {
    if allowed.contains(&r.code.as_str()) {
        Ok(())
    } else {
        Err(format!("{what}: unexpected {} ({})", r.code, r.message))
    }
}

impl Run {
    fn request(&mut self) -> Result<(), String> {
        let w = self.rng.gen_range(0..self.wallets.len());
        let amount = self.rng.gen_range(1..=60) * 100;
        match self.wallets[w].request_tokens(None, amount) {
            Ok(_) => Ok(()),
            Err(e) => tolerate(e.rejection(), &["over-budget"], "request"),
        }
    }

    fn pay(&mut self) -> Result<(), String> {
        let w = self.rng.gen_range(0..self.wallets.len());
        let spendable = self.wallets[w].balance().spendable;
        if spendable == 0 {
            return Ok(());
        }
        let amount = self.rng.gen_range(1..=spendable / 100) * 100;
        let shop = self.shops.choose(&mut self.rng).unwrap().clone();
        let invoice = shop.create_invoice(amount, None).map_err(|r| format!("invoice: {}", r.code))?;
        match self.wallets[w].pay(&invoice) {
            Ok(out) => {
                if out.amount != amount {
                    return Err(format!("paid {} for an invoice of {amount}", out.amount));
                }
                self.tally.payments += 1;
                Ok(())
            }
            Err(e) => tolerate(e.rejection(), &["cannot-compose"], "pay"),
        }
    }

    fn onward(&mut self) -> Result<(), String> {
        let shop = self.shops[0].clone();
        let held: Vec<_> = shop.holdings().into_iter().filter(|h| h.status == HoldingStatus::Held).collect();
        if held.is_empty() {
            return Ok(());
        }
        let take = self.rng.gen_range(1..=held.len());
        let picked: Vec<_> = held.choose_multiple(&mut self.rng, take).cloned().collect();
        let total = picked.iter().map(|h| h.denomination).sum();
        let invoice = self.supplier.create_invoice(total, None).map_err(|r| format!("supplier invoice: {}", r.code))?;
        let req = OnwardRequest {
            token_ids: picked.iter().map(|h| h.token_id).collect(),
            supplier: self.supplier.certificate().clone(),
            deliver: Some(invoice),
        };
        shop.transfer_onward(&req).map_err(|r| format!("onward: {} ({})", r.code, r.message))?;
        self.tally.onward += 1;
        Ok(())
    }

    fn redeem(&mut self) -> Result<(), String> {
        let mut all = self.shops.clone();
        all.push(self.supplier.clone());
        let m = all.choose(&mut self.rng).unwrap();
        match m.redeem_holdings(None) {
            Ok(receipt) => {
                if receipt.gross != receipt.withheld + receipt.net {
                    return Err(format!("receipt {} does not add up", receipt.receipt_id));
                }
                self.tally.redemptions += 1;
                Ok(())
            }
            Err(r) => tolerate(r, &["empty-selection"], "redeem"),
        }
    }

    fn restart(&mut self) {
        match self.rng.gen_range(0..3) {
            0 => self.tb.restart_issuer(),
            1 => self.tb.restart_relay(),
            _ => {
                let i = self.rng.gen_range(0..self.shops.len());
                let config = self.shops[i].config().clone();
                self.shops[i] = self.tb.start_merchant(config);
            }
        }
        self.tally.restarts += 1;
    }

    /// The accounting identities that must hold between any two steps.
    fn check(&self) -> Result<(), String> {
        let audit = self.tb.issuer.audit();
        if audit.total_issued != audit.total_redeemed_gross + audit.outstanding {
            return Err(format!("issued {} != redeemed {} + outstanding {}", audit.total_issued, audit.total_redeemed_gross, audit.outstanding));
        }
        if audit.total_redeemed_gross != audit.total_withheld + audit.total_net {
            return Err("aggregate gross != withheld + net".into());
        }
        let receipts = self.tb.issuer.receipts();
        if receipts.iter().any(|r| r.gross != r.withheld + r.net) {
            return Err("a receipt's gross != withheld + net".into());
        }
        if receipts.iter().map(|r| r.gross).sum::<u64>() != audit.total_redeemed_gross {
            return Err("receipts do not sum to the audited gross".into());
        }
        for (claim, approved) in &self.claims {
            let record = self.tb.issuer.claim(claim).ok_or("claim vanished")?;
            if record.approved_amount != *approved || record.issued_amount > record.approved_amount {
                return Err(format!("claim {claim} over budget"));
            }
        }
        let mut wallet_issued = 0;
        for w in &self.wallets {
            let store = w.snapshot();
            let accredited: u64 =
                store.tokens.values().filter(|t| t.state != TokenState::PendingAccreditation).map(|t| t.denomination).sum();
            let b = w.balance();
            if b.spendable + b.spent != accredited {
                return Err("wallet spendable + spent != accredited".into());
            }
            wallet_issued += accredited;
        }
        if wallet_issued != audit.total_issued {
            return Err(format!("wallets hold {wallet_issued}, issuer issued {}", audit.total_issued));
        }
        Ok(())
    }
}

/// One randomized lifecycle with persistent services under `dir`.
pub fn run_lifecycle(seed: u64, dir: &Path) -> Result<Tally, String> {
    let mut tb = Testbed::build(seed, Some(dir), false);
    let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 0x5eed);
    let mut claims = Vec::new();
    let mut wallets = Vec::new();
    for i in 0..rng.gen_range(1..=3) {
        let claim = format!("claim-{i}");
        let approved = rng.gen_range(0..=150) * 100;
        tb.approve(&claim, approved);
        wallets.push(tb.wallet(&claim));
        claims.push((claim, approved));
    }
    let shops = vec![tb.merchant("food", true), tb.merchant("services", false)];
    let supplier = tb.merchant("wholesale", false);
    let mut run = Run { tb, rng, claims, wallets, shops, supplier, tally: Tally::default() };

    let steps = run.rng.gen_range(10..=24);
    for step in 0..steps {
        let op = run.rng.gen_range(0..100);
        let result = match op {
            0..=29 => run.request(),
            30..=59 => run.pay(),
            60..=69 => run.onward(),
            70..=84 => run.redeem(),
            85..=94 => {
                run.restart();
                Ok(())
            }
            _ => {
                let ms = run.rng.gen_range(1..=120) * 1_000;
                run.tb.clock.advance(ms);
                Ok(())
            }
        };
        result.and_then(|_| run.check()).map_err(|e| format!("seed {seed} step {step}: {e}"))?;
        run.tally.steps += 1;
    }
    Ok(run.tally)
}
