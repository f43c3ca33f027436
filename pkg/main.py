#!/usr/bin/env python3
"""
Главный файл для запуска: python main.py <подкоманда> ...
"""

import asyncio
import os
import sys

# Добавляем корневую директорию в PYTHONPATH
current_dir = os.path.dirname(os.path.abspath(__file__))
sys.path.insert(0, current_dir)

from agesign.app import main

if __name__ == "__main__":
    try:
        sys.exit(asyncio.run(main()))
    except KeyboardInterrupt:
        print("\n🛑 Остановлено пользователем", file=sys.stderr)
        sys.exit(130)
