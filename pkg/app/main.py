import argparse
import logging
import os
import sys
from typing import List, Optional

from app.backend import runner
from app.backend.database import ReportStore
from app.backend.manifest import COMMANDS

DEFAULT_DB = os.path.join(os.path.expanduser('~'), '.seqwarp', 'reports.db')


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='seqwarp', description='Sequential warped product tensor calculus')
    parser.add_argument('-v', '--verbose', action='store_true', help='debug logging')
    sub = parser.add_subparsers(dest='action', required=True)

    run_p = sub.add_parser('run', help='execute the runs of a manifest')
    run_p.add_argument('manifest')
    run_p.add_argument('--out', default='out', help='output directory for report.json and CSV files')
    run_p.add_argument('--only', action='append', choices=COMMANDS, help='restrict to a command (repeatable)')
    run_p.add_argument('--seed', type=int, default=None, help='override the manifest seed')
    run_p.add_argument('--no-timestamp', action='store_true', help='omit wall time and creation time')
    run_p.add_argument('--db', default=None, help='archive the report in this SQLite file')

    check_p = sub.add_parser('check', help='parse and validate a manifest')
    check_p.add_argument('manifest')

    hist_p = sub.add_parser('history', help='list archived runs')
    hist_p.add_argument('--db', default=DEFAULT_DB)
    hist_p.add_argument('--limit', type=int, default=20)
    return parser


def _history(db_path: str, limit: int) -> int:
    if not os.path.exists(db_path):
        logging.getLogger(__name__).error('no report archive at %s', db_path)
        return runner.EXIT_INPUT
    store = ReportStore(db_path)
    try:
        for row in store.get_recent_runs(limit):
            print(f"{row['id']:>5}  {row['created_at']}  {row['verdict']:<4}  seed={row['seed']}  {row['manifest']}")
            for failed in store.get_failed_results(row['id']):
                print(f"         failed: #{failed['position']} {failed['command']} on {failed['construction']}")
    finally:
        store.close()
    return runner.EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format='%(levelname)s %(name)s: %(message)s',
        stream=sys.stderr,
    )
    if args.action == 'check':
        return runner.check(args.manifest)
    if args.action == 'history':
        return _history(args.db, args.limit)
    return runner.run(
        args.manifest,
        only=args.only,
        out_dir=args.out,
        seed=args.seed,
        timestamps=not args.no_timestamp,
        db_path=args.db,
    )


if __name__ == '__main__':
    sys.exit(main())
