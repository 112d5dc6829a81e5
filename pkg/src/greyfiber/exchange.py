"""Fiber Exchange: seller offerings, sealed bids and GSP/VCG clearing.

Money is integer micro-units throughout. Auctions sell ``k`` identical
unit-demand slots: bids under the reserve are dropped, the rest are ranked by
amount (ties: earlier ``submitted_at``, then bidder name) and the top ``k``
win. GSP charges each winner the next-ranked bid; VCG charges every winner
the highest displaced bid. Either falls back to the reserve when nobody is
displaced.
"""

from __future__ import annotations

import itertools
import logging
import threading
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Iterable, Sequence

from greyfiber.errors import (
    DuplicateBid,
    DuplicateOffering,
    EmptyRound,
    UnknownBidder,
    UnknownBuyer,
    UnknownLink,
    UnknownOffering,
    DuplicateBuyer,
)

logger = logging.getLogger(__name__)


class Mechanism(str, Enum):
    GSP = "GSP"
    VCG = "VCG"


@dataclass(frozen=True)
class Offering:
    id: str
    link: str
    seller: str
    reserve: int
    listed_at: float = 0.0


@dataclass(frozen=True)
class Bid:
    bidder: str
    offering: str
    amount: int
    value: int | None = None
    submitted_at: float = 0.0

    @property
    def private_value(self) -> int:
        return self.amount if self.value is None else self.value


@dataclass(frozen=True)
class Winner:
    bidder: str
    payment: int
    bid: int
    value: int


@dataclass(frozen=True)
class AuctionOutcome:
    offerings: tuple[str, ...]
    winners: tuple[Winner, ...]
    clearing_bid: int
    losers: tuple[str, ...]
    mechanism: Mechanism
    reserve: int
    k: int

    def payment_of(self, bidder: str) -> int | None:
        for w in self.winners:
            if w.bidder == bidder:
                return w.payment
        return None

    @property
    def winner_names(self) -> tuple[str, ...]:
        return tuple(w.bidder for w in self.winners)

    def to_json(self) -> dict:
        return {
            "offerings": list(self.offerings),
            "winners": [{"bidder": w.bidder, "payment": w.payment} for w in self.winners],
            "clearing_bid": self.clearing_bid,
            "losers": list(self.losers),
            "mechanism": self.mechanism.value,
            "reserve": self.reserve,
            "k": self.k,
        }


def rank_key(bid: Bid):
    return (-bid.amount, bid.submitted_at, bid.bidder)


def rank_bids(bids: Iterable[Bid]) -> list[Bid]:
    return sorted(bids, key=rank_key)


def _clear(bids: Sequence[Bid], k: int, reserve: int, mechanism: Mechanism,
           offerings: tuple[str, ...]) -> AuctionOutcome:
    if k < 1:
        raise ValueError("an auction needs at least one slot")
    names = [b.bidder for b in bids]
    if len(set(names)) != len(names):
        raise DuplicateBid("one bid per bidder per round")
    ranked = rank_bids(b for b in bids if b.amount >= reserve)
    if not ranked:
        raise EmptyRound(f"no bid reaches the reserve {reserve}")
    n_win = min(k, len(ranked))
    if mechanism is Mechanism.GSP:
        payments = [ranked[j + 1].amount if j + 1 < len(ranked) else reserve for j in range(n_win)]
    else:
        displaced = ranked[k].amount if len(ranked) > k else reserve
        payments = [displaced] * n_win
    winners = tuple(Winner(b.bidder, p, b.amount, b.private_value) for b, p in zip(ranked, payments))
    won = {w.bidder for w in winners}
    losers = tuple(b.bidder for b in rank_bids(bids) if b.bidder not in won)
    return AuctionOutcome(offerings, winners, payments[-1], losers, mechanism, reserve, k)


def run_gsp_auction(bids: Sequence[Bid], k: int = 1, reserve: int = 0,
                    offerings: Iterable[str] = ()) -> AuctionOutcome:
    return _clear(bids, k, reserve, Mechanism.GSP, tuple(offerings))


def run_vcg_auction(bids: Sequence[Bid], k: int = 1, reserve: int = 0,
                    offerings: Iterable[str] = ()) -> AuctionOutcome:
    return _clear(bids, k, reserve, Mechanism.VCG, tuple(offerings))


def run_auction(mechanism: Mechanism | str, bids: Sequence[Bid], k: int = 1, reserve: int = 0,
                offerings: Iterable[str] = ()) -> AuctionOutcome:
    return _clear(bids, k, reserve, Mechanism(mechanism), tuple(offerings))


def payoff(outcome: AuctionOutcome, bidder: str, participants: Iterable[str] | None = None) -> int:
    """Winner: private value minus payment. Loser: zero."""
    for w in outcome.winners:
        if w.bidder == bidder:
            return w.value - w.payment
    if bidder in outcome.losers or (participants is not None and bidder in set(participants)):
        return 0
    raise UnknownBidder(bidder)


@dataclass(frozen=True)
class Receipt:
    round_id: str
    bidder: str
    offering: str
    seq: int


@dataclass
class _OfferingState:
    offering: Offering
    round: int = 1
    open: bool = True
    sealed: dict[str, Bid] = field(default_factory=dict)


class Exchange:
    """Stateful venue. Bid submission is thread-safe; clearing is serialized."""

    def __init__(self, link_exists: Callable[[str], bool] | None = None,
                 mechanism: Mechanism | str = Mechanism.GSP) -> None:
        self.mechanism = Mechanism(mechanism)
        self._link_exists = link_exists
        self._offerings: dict[str, _OfferingState] = {}
        self._by_link: dict[str, str] = {}
        self.sellers: set[str] = set()
        self.buyers: set[str] = set()
        self.outcomes: list[AuctionOutcome] = []
        self.obligations: dict[tuple[str, str], int] = {}
        self.advertised: list[tuple[str, str]] = []
        self._seq = itertools.count(1)
        self._lot_seq = itertools.count(1)
        self._lock = threading.RLock()
        self._clear_lock = threading.Lock()

    # registration -----------------------------------------------------------

    def register_seller(self, seller: str) -> None:
        with self._lock:
            self.sellers.add(seller)

    def register_buyer(self, buyer: str) -> None:
        with self._lock:
            if buyer in self.buyers:
                raise DuplicateBuyer(buyer)
            self.buyers.add(buyer)

    def register_offering(self, seller: str, link: str, reserve: int, listed_at: float = 0.0) -> str:
        if reserve < 0:
            raise ValueError("reserve must be non-negative")
        with self._lock:
            if self._link_exists is not None and not self._link_exists(link):
                raise UnknownLink(link)
            existing = self._by_link.get(link)
            if existing is not None:
                st = self._offerings[existing]
                if st.open and (st.offering.seller, st.offering.reserve) == (seller, reserve):
                    return existing
                if st.open:
                    raise DuplicateOffering(f"link {link} already offered as {existing}")
            oid = f"off-{link}"
            if oid in self._offerings:
                oid = f"off-{link}-{next(self._seq)}"
            self._offerings[oid] = _OfferingState(Offering(oid, link, seller, reserve, listed_at))
            self._by_link[link] = oid
            self.sellers.add(seller)
            for buyer in sorted(self.buyers):
                self.advertised.append((buyer, oid))
            return oid

    def close_offering(self, offering_id: str) -> None:
        with self._lock:
            self._state(offering_id).open = False

    def offering(self, offering_id: str) -> Offering:
        return self._state(offering_id).offering

    def offering_for_link(self, link: str) -> Offering | None:
        oid = self._by_link.get(link)
        if oid is None or not self._offerings[oid].open:
            return None
        return self._offerings[oid].offering

    @property
    def listed(self) -> list[Offering]:
        """The list L of live offerings."""
        return [s.offering for s in self._offerings.values() if s.open]

    def _state(self, offering_id: str) -> _OfferingState:
        try:
            return self._offerings[offering_id]
        except KeyError:
            raise UnknownOffering(offering_id) from None

    # bidding ----------------------------------------------------------------

    def submit_bid(self, bid: Bid) -> Receipt:
        with self._lock:
            if bid.bidder not in self.buyers:
                raise UnknownBuyer(bid.bidder)
            st = self._offerings.get(bid.offering)
            if st is None or not st.open:
                raise UnknownOffering(bid.offering)
            if bid.amount < 0:
                raise ValueError("bid amount must be non-negative")
            if bid.bidder in st.sealed:
                raise DuplicateBid(f"{bid.bidder} already bid on {bid.offering} this round")
            st.sealed[bid.bidder] = bid
            return Receipt(f"{bid.offering}#{st.round}", bid.bidder, bid.offering, next(self._seq))

    def sealed_bids_visible_to(self, bidder: str) -> list[Bid]:
        with self._lock:
            return [b for st in self._offerings.values() for b in st.sealed.values() if b.bidder == bidder]

    def close_round(self, offering_ids: Sequence[str], k: int | None = None,
                    mechanism: Mechanism | str | None = None) -> AuctionOutcome:
        """Clear the sealed bids on a set of identical offerings.

        A bidder who bid on several offerings of the set is counted once at
        their highest bid. Offerings reopen for the next round either way.
        """
        mech = Mechanism(mechanism) if mechanism is not None else self.mechanism
        with self._clear_lock:
            with self._lock:
                states = [self._state(o) for o in offering_ids]
                if any(not s.open for s in states):
                    raise UnknownOffering("round includes a closed offering")
                best: dict[str, Bid] = {}
                for s in states:
                    for b in s.sealed.values():
                        if b.bidder not in best or rank_key(b) < rank_key(best[b.bidder]):
                            best[b.bidder] = b
                reserve = max(s.offering.reserve for s in states)
                slots = len(states) if k is None else k
                round_key = "+".join(f"{s.offering.id}#{s.round}" for s in states)
                for s in states:
                    s.sealed = {}
                    s.round += 1
            outcome = _clear(list(best.values()), slots, reserve, mech, tuple(offering_ids))
            self._settle(round_key, outcome)
            return outcome

    def clear_lot(self, bids: Sequence[Bid], k: int, reserve: int,
                  mechanism: Mechanism | str | None = None) -> tuple[str, AuctionOutcome]:
        """Clear an ad-hoc lot assembled by the controller. Returns (round id, outcome)."""
        mech = Mechanism(mechanism) if mechanism is not None else self.mechanism
        with self._clear_lock:
            for b in bids:
                if b.bidder not in self.buyers:
                    raise UnknownBuyer(b.bidder)
            round_key = f"lot{next(self._lot_seq)}"
            outcome = _clear(bids, k, reserve, mech, tuple(sorted({b.offering for b in bids})))
            self._settle(round_key, outcome)
            return round_key, outcome

    def _settle(self, round_key: str, outcome: AuctionOutcome) -> None:
        with self._lock:
            self.outcomes.append(outcome)
            for w in outcome.winners:
                self.obligations[(round_key, w.bidder)] = w.payment
        logger.debug("round %s cleared: %s", round_key, outcome.winner_names)

    def cancel_obligation(self, round_key: str, bidder: str) -> int:
        """Void a winner's payment, e.g. when the graph cannot admit their request."""
        with self._lock:
            return self.obligations.pop((round_key, bidder), 0)
