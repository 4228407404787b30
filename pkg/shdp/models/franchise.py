"""Chinese-restaurant-franchise state for one response variable.

Each restaurant is a population, each customer a patient. Tables serve a pair
of dishes (+phi, -phi); a customer's sign picks which member of the pair they eat.
Tables and dishes carry stable integer ids that are never reused within a chain.
"""

from typing import Dict, Any, List, Optional, Sequence, Tuple
import logging

import numpy as np

from shdp.errors import ArgumentError, DomainError

logger = logging.getLogger(__name__)


class DishAtom:
    """One menu entry: the pair (+xi, sigma2) / (-xi, sigma2)."""

    __slots__ = ('xi', 'sigma2')

    def __init__(self, xi: float, sigma2: float):
        if not sigma2 > 0:
            raise DomainError(f"Dish variance must be positive, got {sigma2}")
        self.xi = float(xi)
        self.sigma2 = float(sigma2)

    def flipped(self) -> 'DishAtom':
        return DishAtom(-self.xi, self.sigma2)

    def to_dict(self) -> Dict[str, Any]:
        return {'xi': self.xi, 'sigma2': self.sigma2}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'DishAtom':
        return cls(data['xi'], data['sigma2'])

    def __eq__(self, other: object) -> bool:
        return isinstance(other, DishAtom) and self.xi == other.xi and self.sigma2 == other.sigma2

    def __repr__(self) -> str:
        return f"DishAtom(xi={self.xi}, sigma2={self.sigma2})"


class SeatRecord:
    """What ``remove_customer`` took out, so ``restore_customer`` can put it back."""

    __slots__ = ('j', 'i', 'table', 'sign', 'dish', 'table_closed', 'dropped_atom')

    def __init__(self, j: int, i: int, table: int, sign: int, dish: int,
                 table_closed: bool = False, dropped_atom: Optional[DishAtom] = None):
        self.j = j
        self.i = i
        self.table = table
        self.sign = sign
        self.dish = dish
        self.table_closed = table_closed
        self.dropped_atom = dropped_atom


class FranchiseState:

    UNSEATED = -1

    def __init__(self, sizes: Sequence[int], gamma: Any, alpha: float):
        self.sizes = [int(n) for n in sizes]
        if any(n < 0 for n in self.sizes):
            raise ArgumentError(f"Restaurant sizes must be non-negative, got {self.sizes}")
        self.J = len(self.sizes)
        gamma_arr = np.broadcast_to(np.asarray(gamma, dtype=float), (self.J,)).copy()
        if np.any(gamma_arr <= 0) or not alpha > 0:
            raise DomainError("Concentrations gamma and alpha must be positive")
        self.gamma = gamma_arr
        self.alpha = float(alpha)

        self.table_of = [np.full(n, self.UNSEATED, dtype=np.int64) for n in self.sizes]
        self.sign = [np.ones(n, dtype=np.int64) for n in self.sizes]
        self.occupancy: List[Dict[int, int]] = [{} for _ in self.sizes]
        self.dish_of_table: List[Dict[int, Optional[int]]] = [{} for _ in self.sizes]
        self.tables_per_dish: List[Dict[int, int]] = [{} for _ in self.sizes]
        self.dish_tables: Dict[int, int] = {}
        self.menu: Dict[int, DishAtom] = {}
        self.next_table_id = [0] * self.J
        self.next_dish_id = 0

    # Menu and tables

    def open_dish(self, atom: DishAtom, dish_id: Optional[int] = None) -> int:
        if dish_id is None:
            dish_id = self.next_dish_id
        if dish_id in self.menu:
            raise ArgumentError(f"Dish {dish_id} already on the menu")
        self.menu[dish_id] = atom
        self.dish_tables[dish_id] = 0
        self.next_dish_id = max(self.next_dish_id, dish_id + 1)
        return dish_id

    def drop_dish(self, dish: int) -> DishAtom:
        if self.dish_tables.get(dish, 0) != 0:
            raise ArgumentError(f"Dish {dish} is still served at {self.dish_tables[dish]} tables")
        self.dish_tables.pop(dish, None)
        return self.menu.pop(dish)

    def open_table(self, j: int, dish: Optional[int], table_id: Optional[int] = None) -> int:
        if table_id is None:
            table_id = self.next_table_id[j]
        if table_id in self.occupancy[j]:
            raise ArgumentError(f"Table {table_id} already open in restaurant {j}")
        self.occupancy[j][table_id] = 0
        self.dish_of_table[j][table_id] = None
        self.next_table_id[j] = max(self.next_table_id[j], table_id + 1)
        if dish is not None:
            self.assign_dish(j, table_id, dish)
        return table_id

    def close_table(self, j: int, table: int) -> Tuple[int, Optional[DishAtom]]:
        """Remove an empty table; drops its dish too if no other table serves it."""
        if self.occupancy[j][table] != 0:
            raise ArgumentError(f"Table {table} in restaurant {j} is not empty")
        dish, dropped = self.detach_dish(j, table)
        del self.occupancy[j][table]
        del self.dish_of_table[j][table]
        return dish, dropped

    def assign_dish(self, j: int, table: int, dish: int) -> None:
        if dish not in self.menu:
            raise ArgumentError(f"Dish {dish} is not on the menu")
        if self.dish_of_table[j][table] is not None:
            raise ArgumentError(f"Table {table} in restaurant {j} already has a dish")
        self.dish_of_table[j][table] = dish
        self.tables_per_dish[j][dish] = self.tables_per_dish[j].get(dish, 0) + 1
        self.dish_tables[dish] += 1

    def detach_dish(self, j: int, table: int) -> Tuple[int, Optional[DishAtom]]:
        """Take the dish off a table; returns (dish id, atom if the dish left the menu)."""
        dish = self.dish_of_table[j][table]
        if dish is None:
            raise ArgumentError(f"Table {table} in restaurant {j} has no dish")
        self.dish_of_table[j][table] = None
        left = self.tables_per_dish[j][dish] - 1
        if left:
            self.tables_per_dish[j][dish] = left
        else:
            del self.tables_per_dish[j][dish]
        self.dish_tables[dish] -= 1
        dropped = self.drop_dish(dish) if self.dish_tables[dish] == 0 else None
        return dish, dropped

    # Customers

    def add_customer(self, j: int, i: int, table: int, sign: int) -> None:
        if self.table_of[j][i] != self.UNSEATED:
            raise ArgumentError(f"Customer {i} in restaurant {j} is already seated")
        if sign not in (1, -1):
            raise ArgumentError(f"Sign must be +1 or -1, got {sign}")
        self.table_of[j][i] = table
        self.sign[j][i] = sign
        self.occupancy[j][table] += 1

    def remove_customer(self, j: int, i: int) -> SeatRecord:
        table = int(self.table_of[j][i])
        if table == self.UNSEATED:
            raise ArgumentError(f"Customer {i} in restaurant {j} is not seated")
        record = SeatRecord(j, i, table, int(self.sign[j][i]), self.dish_of_table[j][table])
        self.table_of[j][i] = self.UNSEATED
        self.occupancy[j][table] -= 1
        if self.occupancy[j][table] == 0:
            _, dropped = self.close_table(j, table)
            record.table_closed = True
            record.dropped_atom = dropped
        return record

    def restore_customer(self, record: SeatRecord) -> None:
        if record.dropped_atom is not None:
            self.open_dish(record.dropped_atom, dish_id=record.dish)
        if record.table_closed:
            self.open_table(record.j, record.dish, table_id=record.table)
        self.add_customer(record.j, record.i, record.table, record.sign)

    # Queries

    def customers_at(self, j: int, table: int) -> np.ndarray:
        return np.flatnonzero(self.table_of[j] == table)

    def dish_of(self, j: int, i: int) -> int:
        return self.dish_of_table[j][int(self.table_of[j][i])]

    def atom_of(self, j: int, i: int) -> DishAtom:
        return self.menu[self.dish_of(j, i)]

    def n_tables(self, j: int) -> int:
        return len(self.occupancy[j])

    def total_tables(self) -> int:
        return sum(self.dish_tables.values())

    @property
    def n_dishes(self) -> int:
        return len(self.menu)

    def menu_arrays(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """(dish ids, xi, sigma2, franchise-wide table counts) in id order."""
        ids = np.array(sorted(self.menu), dtype=np.int64)
        xi = np.array([self.menu[h].xi for h in ids], dtype=float)
        sigma2 = np.array([self.menu[h].sigma2 for h in ids], dtype=float)
        ell = np.array([self.dish_tables[h] for h in ids], dtype=float)
        return ids, xi, sigma2, ell

    def dish_labels(self) -> np.ndarray:
        """Dish id of every patient, populations concatenated in order."""
        out = []
        for j in range(self.J):
            dishes = self.dish_of_table[j]
            out.extend(dishes[int(t)] for t in self.table_of[j])
        return np.array(out, dtype=np.int64)

    def signs(self) -> np.ndarray:
        return np.concatenate(self.sign) if self.J else np.zeros(0, dtype=np.int64)

    def audit(self, repair: bool = False) -> List[str]:
        """Recount occupancy and tables-per-dish from assignments and report drift."""
        problems: List[str] = []
        dish_tables: Dict[int, int] = {}
        for j in range(self.J):
            seated = self.table_of[j]
            if np.any(seated == self.UNSEATED):
                problems.append(f"restaurant {j}: unseated customers")
            tables, counts = np.unique(seated[seated != self.UNSEATED], return_counts=True)
            occupancy = {int(t): int(c) for t, c in zip(tables, counts)}
            if occupancy != self.occupancy[j]:
                problems.append(f"restaurant {j}: occupancy drift")
            if sum(occupancy.values()) != self.sizes[j] and not np.any(seated == self.UNSEATED):
                problems.append(f"restaurant {j}: occupancy does not sum to {self.sizes[j]}")
            per_dish: Dict[int, int] = {}
            for table, dish in self.dish_of_table[j].items():
                if dish is None:
                    problems.append(f"restaurant {j}: table {table} has no dish")
                    continue
                per_dish[dish] = per_dish.get(dish, 0) + 1
                dish_tables[dish] = dish_tables.get(dish, 0) + 1
            if per_dish != self.tables_per_dish[j]:
                problems.append(f"restaurant {j}: tables-per-dish drift")
                if repair:
                    self.tables_per_dish[j] = per_dish
            if repair and occupancy != self.occupancy[j]:
                self.occupancy[j] = occupancy
        if dish_tables != self.dish_tables:
            problems.append("franchise: dish table counts drift")
            if repair:
                self.dish_tables = {h: dish_tables.get(h, 0) for h in self.menu}
        unused = [h for h in self.menu if dish_tables.get(h, 0) == 0]
        if unused:
            problems.append(f"franchise: unused dishes {unused}")
            if repair:
                for h in unused:
                    self.dish_tables.pop(h, None)
                    self.menu.pop(h)
        return problems

    def snapshot(self) -> Dict[str, Any]:
        """Compact mixture description used by the predictive density."""
        tables = [
            [[int(n), int(self.dish_of_table[j][t])] for t, n in sorted(self.occupancy[j].items())]
            for j in range(self.J)
        ]
        menu = [[int(h), int(self.dish_tables[h]), self.menu[h].xi, self.menu[h].sigma2]
                for h in sorted(self.menu)]
        return {'tables': tables, 'menu': menu, 'gamma': [float(g) for g in self.gamma],
                'alpha': self.alpha}

    def to_dict(self) -> Dict[str, Any]:
        return {
            'sizes': list(self.sizes),
            'gamma': [float(g) for g in self.gamma],
            'alpha': self.alpha,
            'table_of': [[int(t) for t in tables] for tables in self.table_of],
            'sign': [[int(s) for s in signs] for signs in self.sign],
            'dish_of_table': [
                [[int(t), int(h) if h is not None else None] for t, h in sorted(d.items())]
                for d in self.dish_of_table
            ],
            'menu': [[int(h), self.menu[h].xi, self.menu[h].sigma2] for h in sorted(self.menu)],
            'next_table_id': list(self.next_table_id),
            'next_dish_id': self.next_dish_id,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'FranchiseState':
        state = cls(data['sizes'], data['gamma'], data['alpha'])
        for h, xi, sigma2 in data['menu']:
            state.open_dish(DishAtom(xi, sigma2), dish_id=int(h))
        for j, tables in enumerate(data['dish_of_table']):
            for t, h in tables:
                state.open_table(j, h, table_id=int(t))
        for j, (tables, signs) in enumerate(zip(data['table_of'], data['sign'])):
            for i, (t, s) in enumerate(zip(tables, signs)):
                if t != cls.UNSEATED:
                    state.add_customer(j, i, int(t), int(s))
        state.next_table_id = [int(x) for x in data['next_table_id']]
        state.next_dish_id = int(data['next_dish_id'])
        return state

    def copy(self) -> 'FranchiseState':
        return FranchiseState.from_dict(self.to_dict())
