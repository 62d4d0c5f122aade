'''
Author: qianye
Date: 2025-06-08 20:32:52
LastEditTime: 2025-10-14 10:27:51
Description: command-line entry, `python VCNet.py train --config config/breast_cancer.json`
'''
# coding:utf-8
from app.view.cli import main


if __name__ == "__main__":
    main()
