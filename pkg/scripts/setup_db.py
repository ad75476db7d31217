import os
import sys

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from app.backend.database import ReportStore


def main():
	target = sys.argv[1] if len(sys.argv) > 1 else os.path.expanduser('~/.seqwarp/reports.db')
	db = ReportStore(target)
	print('Report archive initialized at', target)
	db.close()


if __name__ == '__main__':
	main()
